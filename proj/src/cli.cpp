#include "uwloc/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "io_util.hpp"
#include "uwloc/config.hpp"
#include "uwloc/dataset.hpp"
#include "uwloc/models.hpp"
#include "uwloc/nn/gradcheck.hpp"
#include "uwloc/pca.hpp"
#include "uwloc/spectral.hpp"
#include "uwloc/synth.hpp"
#include "uwloc/train.hpp"

namespace uwloc::cli {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using nlohmann::json;

namespace {

std::string checksum_hex(const fs::path& path) {
  auto in = detail::open_in(path.string(), true);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  std::ostringstream hex;
  hex << std::hex << config::fnv1a64(bytes.data(), bytes.size());
  return hex.str();
}

// One writer per workdir; manifests stay consistent.
class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& workdir) : path_(workdir / ".lock") {
    fs::create_directories(workdir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      fail(ErrorCode::ConfigError,
           "workdir is locked by another command; remove " + path_.string() +
               " if that command crashed");
  }
  ~WorkdirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// A subcommand's working directory plus its manifest bookkeeping. Inputs
// pulled from other stages are verified against that stage's manifest before
// use; outputs are checksummed into this stage's manifest on finish().
struct Stage {
  Stage(const ExperimentConfig& config, const std::string& name)
      : cfg(config), stage_name(name), dir(fs::path(cfg.workdir) / name) {
    fs::create_directories(dir);
    manifest["stage"] = name;
    manifest["seed"] = cfg.seed;
    std::ostringstream hex;
    hex << std::hex << config::config_hash(cfg);
    manifest["config_hash"] = hex.str();
    manifest["config"] = config::serialize(cfg);
    manifest["inputs"] = json::object();
    manifest["outputs"] = json::object();
  }

  fs::path input_from_stage(const std::string& producer, const std::string& file) {
    const fs::path producer_dir = fs::path(cfg.workdir) / producer;
    const fs::path manifest_path = producer_dir / "manifest.json";
    const fs::path artifact = producer_dir / file;
    if (!fs::exists(manifest_path) || !fs::exists(artifact))
      fail(ErrorCode::MissingArtifact,
           "missing " + artifact.string() + "; run `uwloc " + producer +
               "` first");
    std::ifstream in(manifest_path);
    json producer_manifest;
    in >> producer_manifest;
    const auto& outputs = producer_manifest.at("outputs");
    if (!outputs.contains(file))
      fail(ErrorCode::MissingArtifact,
           file + " is not a recorded output of stage " + producer);
    const std::string expected = outputs.at(file).get<std::string>();
    const std::string actual = checksum_hex(artifact);
    if (expected != actual)
      fail(ErrorCode::IoError,
           artifact.string() +
               " was modified after creation (write-once discipline)");
    manifest["inputs"][artifact.string()] = actual;
    return artifact;
  }

  void record_external_input(const fs::path& path) {
    if (fs::exists(path)) manifest["inputs"][path.string()] = checksum_hex(path);
  }

  fs::path out(const std::string& file) {
    output_files.push_back(file);
    return dir / file;
  }

  // not checksummed so reports stay byte-reproducible across runs
  fs::path out_volatile(const std::string& file) const { return dir / file; }

  void note(const std::string& key, const json& value) { manifest[key] = value; }

  void finish() {
    for (const auto& file : output_files)
      manifest["outputs"][file] = checksum_hex(dir / file);
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
  }

  const ExperimentConfig& cfg;
  std::string stage_name;
  fs::path dir;
  json manifest;
  std::vector<std::string> output_files;
};

void echo_deviations(const ExperimentConfig& cfg) {
  const ExperimentConfig defaults;
  const auto warn = [](const std::string& key, const std::string& got,
                       const std::string& expected) {
    std::cerr << "note: " << key << " = " << got << " (published default "
              << expected << ")\n";
  };
  if (cfg.epsilon != defaults.epsilon)
    warn("selection.epsilon", detail::format_double(cfg.epsilon),
         detail::format_double(defaults.epsilon));
  if (cfg.components != defaults.components)
    warn("selection.components", std::to_string(cfg.components),
         std::to_string(defaults.components));
  if (cfg.lr_step_one != defaults.lr_step_one)
    warn("train.lr_step_one", detail::format_double(cfg.lr_step_one),
         detail::format_double(defaults.lr_step_one));
  if (cfg.lr_step_two != defaults.lr_step_two)
    warn("train.lr_step_two", detail::format_double(cfg.lr_step_two),
         detail::format_double(defaults.lr_step_two));
  if (cfg.epochs != defaults.epochs)
    warn("train.epochs", std::to_string(cfg.epochs),
         std::to_string(defaults.epochs));
}

train::TrainConfig train_config(const ExperimentConfig& cfg) {
  train::TrainConfig tc;
  tc.lr_step_one = cfg.lr_step_one;
  tc.lr_step_two = cfg.lr_step_two;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.seed = cfg.seed;
  tc.precision =
      cfg.precision == "f32" ? train::Precision::F32 : train::Precision::F64;
  return tc;
}

nn::StorageType storage_type(const ExperimentConfig& cfg) {
  return cfg.precision == "f32" ? nn::StorageType::F32 : nn::StorageType::F64;
}

models::MlpSpec mlp_spec(const ExperimentConfig& cfg) {
  return {cfg.mlp_widths, cfg.dropout_p};
}

models::EncoderPlan make_plan(const ExperimentConfig& cfg, std::size_t width) {
  auto plan = models::plan_encoder(
      width, models::variant_from_string(cfg.variant), cfg.with_fs);
  plan.leaky_slope = cfg.leaky_slope;
  return plan;
}

std::vector<double> scaled_labels_for(const spectral::FeatureMatrix& fm,
                                      const std::vector<double>& labels_km) {
  if (labels_km.size() != fm.n_frames())
    fail(ErrorCode::LabelLengthMismatch,
         "labels file has " + std::to_string(labels_km.size()) +
             " rows, feature matrix has " + std::to_string(fm.n_frames()));
  std::vector<double> scaled(labels_km.size(), 0.0);
  if (fm.label_max > fm.label_min) {
    const double inv = 1.0 / (fm.label_max - fm.label_min);
    for (std::size_t i = 0; i < labels_km.size(); ++i)
      scaled[i] = (labels_km[i] - fm.label_min) * inv;
  }
  return scaled;
}

fs::path default_labels_path(const ExperimentConfig& cfg) {
  if (!cfg.labels.empty()) return cfg.labels;
  return fs::path(cfg.workdir) / "synth" / "labels.csv";
}

std::map<std::string, double> read_metrics_csv(const fs::path& path) {
  auto in = detail::open_in(path.string());
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, double> metrics;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    metrics[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return metrics;
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<std::pair<std::string, double>>& rows) {
  auto out = detail::open_out(path.string());
  out << "metric,value\n";
  for (const auto& [key, value] : rows)
    out << key << ',' << detail::format_double(value) << "\n";
}

double read_seconds_file(const fs::path& path) {
  auto in = detail::open_in(path.string());
  double v = 0.0;
  in >> v;
  return v;
}

// ---- subcommand bodies ----

int cmd_synth(const ExperimentConfig& cfg, const std::string& synth_config_path,
              std::optional<uint64_t> seed_override) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "synth");

  synth::SynthConfig scfg;
  if (!synth_config_path.empty()) {
    scfg = synth::load_config(synth_config_path);
    stage.record_external_input(synth_config_path);
  }
  if (seed_override) scfg.seed = *seed_override;

  const auto data = synth::generate(scfg);
  spectral::write_raw_f32(data.series, stage.out("signal.f32").string(),
                          stage.out("signal.meta").string());
  spectral::write_labels_csv(data.labels_km, stage.out("labels.csv").string());
  {
    auto out = detail::open_out(stage.out("planted_bins.csv").string());
    out << "column_index\n";
    for (std::size_t j : data.planted_bins) out << j << "\n";
  }
  synth::save_config(scfg, stage.out("synth_config.txt").string());
  stage.note("n_samples", data.series.samples.size());
  stage.note("n_frames", data.labels_km.size());
  stage.finish();
  std::cout << "synth: " << data.series.samples.size() << " samples, "
            << data.labels_km.size() << " frames, "
            << data.planted_bins.size() << " planted bins -> "
            << stage.dir.string() << "\n";
  return 0;
}

int cmd_preprocess(const ExperimentConfig& cfg) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "preprocess");

  fs::path signal_path, meta_path;
  spectral::TimeSeries ts;
  if (!cfg.signal.empty()) {
    signal_path = cfg.signal;
    stage.record_external_input(signal_path);
    if (signal_path.extension() == ".wav") {
      ts = spectral::read_wav(signal_path.string());
    } else {
      meta_path = cfg.signal_meta.empty()
                      ? fs::path(signal_path).replace_extension(".meta")
                      : fs::path(cfg.signal_meta);
      stage.record_external_input(meta_path);
      ts = spectral::read_raw_f32(signal_path.string(), meta_path.string());
    }
  } else {
    signal_path = stage.input_from_stage("synth", "signal.f32");
    meta_path = stage.input_from_stage("synth", "signal.meta");
    ts = spectral::read_raw_f32(signal_path.string(), meta_path.string());
  }

  fs::path labels_path;
  if (!cfg.labels.empty()) {
    labels_path = cfg.labels;
    stage.record_external_input(labels_path);
  } else {
    labels_path = stage.input_from_stage("synth", "labels.csv");
  }
  const auto labels_km = spectral::read_labels_csv(labels_path.string());

  auto [fm, lv] = spectral::build_feature_matrix(ts, labels_km, cfg.frame_seconds);
  spectral::save_feature_matrix(fm, stage.out("features.uwfm").string());
  if (cfg.emit_feature_csv)
    spectral::export_feature_matrix_csv(fm, stage.out("features.csv").string());
  stage.note("receiver_id", ts.receiver_id);
  stage.note("n_frames", fm.n_frames());
  stage.note("n_features", fm.n_features());
  stage.finish();
  std::cout << "preprocess: " << fm.n_frames() << " x " << fm.n_features()
            << " feature matrix -> " << stage.dir.string() << "\n";
  return 0;
}

int cmd_select(const ExperimentConfig& cfg) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "select");

  const auto fm = spectral::load_feature_matrix(
      stage.input_from_stage("preprocess", "features.uwfm").string());
  const fs::path labels_path = default_labels_path(cfg);
  stage.record_external_input(labels_path);
  const auto labels_km = spectral::read_labels_csv(labels_path.string());
  const auto y = scaled_labels_for(fm, labels_km);

  const auto sel =
      pca::select_pipeline(fm.values, y, cfg.components, cfg.epsilon);
  pca::export_selection_csv(sel, fm.frame_seconds,
                            stage.out("selection.csv").string());
  pca::save_selected_indices(sel.selected_indices,
                             stage.out("selected_indices.uwsl").string());

  // interpretation: a second PCA on the selected matrix, correlation loadings
  const auto xbar = pca::build_selected_matrix(fm.values, sel.selected_indices);
  if (cfg.loading_pc_a < 1 || cfg.loading_pc_b < 1)
    fail(ErrorCode::ConfigError, "loading PC indices are 1-based");
  const std::size_t need =
      std::max({cfg.components, cfg.loading_pc_a, cfg.loading_pc_b});
  const std::size_t a2 = std::min({need, xbar.rows() - 1, xbar.cols()});
  const auto pca2 = pca::pca_fit(xbar, a2);
  auto [xc, means] = pca::mean_center(xbar);
  const auto loadings = pca::correlation_loadings(xc, pca2.scores);
  const std::size_t pc_a = std::min(cfg.loading_pc_a, a2) - 1;
  const std::size_t pc_b = std::min(cfg.loading_pc_b, a2) - 1;
  pca::export_loadings_csv(loadings, pc_a, pc_b, fm.frame_seconds,
                           stage.out("loadings.csv").string(),
                           sel.selected_indices);
  if (cfg.emit_svg)
    pca::export_loadings_svg(loadings, pc_a, pc_b,
                             stage.out("loadings.svg").string());
  stage.note("selected_count", sel.selected_count);
  stage.finish();
  std::cout << "select: " << sel.selected_count << " of " << fm.n_features()
            << " columns kept (epsilon=" << cfg.epsilon << ", A="
            << cfg.components << ") -> " << stage.dir.string() << "\n";
  return 0;
}

struct LoadedFeatures {
  spectral::FeatureMatrix fm;
  linalg::Matrix selected;  // X-bar (or the full matrix without FS)
  std::vector<std::size_t> indices;
};

LoadedFeatures load_training_features(const ExperimentConfig& cfg, Stage& stage) {
  LoadedFeatures out;
  out.fm = spectral::load_feature_matrix(
      stage.input_from_stage("preprocess", "features.uwfm").string());
  if (cfg.with_fs) {
    out.indices = pca::load_selected_indices(
        stage.input_from_stage("select", "selected_indices.uwsl").string());
    out.selected = pca::build_selected_matrix(out.fm.values, out.indices);
  } else {
    out.selected = out.fm.values;
  }
  return out;
}

int cmd_train_cae(const ExperimentConfig& cfg) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "train-cae");

  auto features = load_training_features(cfg, stage);
  const auto plan = make_plan(cfg, features.selected.cols());
  const auto ds = dataset::build_step_one(features.selected);
  auto result = train::train_cae(ds, plan, train_config(cfg));

  nn::save_checkpoint(result.model.store, stage.out("cae.uwnn").string(),
                      /*include_adam=*/false, storage_type(cfg));
  train::write_loss_curve_csv(result.curve, stage.out("loss_curve.csv").string());
  {
    auto out = detail::open_out(stage.out_volatile("train_seconds.txt").string());
    out << detail::format_double(result.wall_seconds) << "\n";
  }
  stage.note("input_width", plan.input_width);
  stage.note("n_dense1", plan.flatten_size);
  stage.finish();
  std::cout << "train-cae: final reconstruction MSE "
            << result.curve.epoch_mse.back() << " after " << cfg.epochs
            << " epochs (" << result.wall_seconds << " s) -> "
            << stage.dir.string() << "\n";
  return 0;
}

int run_step_two(const ExperimentConfig& cfg, bool supervised) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, supervised ? "train-supervised" : "train-localizer");

  auto features = load_training_features(cfg, stage);
  const fs::path labels_path = default_labels_path(cfg);
  stage.record_external_input(labels_path);
  const auto labels_km = spectral::read_labels_csv(labels_path.string());
  const auto y = scaled_labels_for(features.fm, labels_km);

  const auto plan = make_plan(cfg, features.selected.cols());
  const auto ds =
      dataset::build_step_two(features.selected, y, {cfg.modulus});
  dataset::export_split_csv(ds.indices, features.selected.rows(),
                            stage.out("split.csv").string());

  train::RegressionRunResult result;
  if (supervised) {
    result = train::train_supervised(ds, plan, mlp_spec(cfg), train_config(cfg));
  } else {
    const auto ckpt = stage.input_from_stage("train-cae", "cae.uwnn");
    result = train::train_localizer(ds, plan, mlp_spec(cfg), ckpt.string(),
                                    train_config(cfg), /*frozen=*/true);
  }

  nn::save_checkpoint(result.model.store, stage.out("localizer.uwnn").string(),
                      /*include_adam=*/false, storage_type(cfg));
  train::write_loss_curve_csv(result.curve, stage.out("loss_curve.csv").string());
  write_metrics_csv(stage.out("metrics.csv"),
                    {{"train_mse", result.train_mse},
                     {"test_mse", result.test_mse},
                     {"n_train", static_cast<double>(ds.train_rows.rows())},
                     {"n_test", static_cast<double>(ds.test_rows.rows())}});
  std::vector<double> predictions;
  train::evaluate_mse(result.model, ds.test_rows, ds.test_labels, &predictions,
                      cfg.batch_size);
  train::write_predictions_csv(ds.test_labels, predictions, features.fm.label_min,
                               features.fm.label_max,
                               stage.out("predictions.csv").string());
  {
    auto out = detail::open_out(stage.out_volatile("train_seconds.txt").string());
    out << detail::format_double(result.wall_seconds) << "\n";
  }
  stage.finish();
  std::cout << stage.stage_name << ": test MSE " << result.test_mse << " ("
            << ds.train_rows.rows() << " train / " << ds.test_rows.rows()
            << " test, " << result.wall_seconds << " s) -> "
            << stage.dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, std::string model_path,
                 std::string features_path, std::string labels_path) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "evaluate");

  if (model_path.empty())
    model_path =
        stage.input_from_stage("train-localizer", "localizer.uwnn").string();
  else
    stage.record_external_input(model_path);

  spectral::FeatureMatrix fm;
  if (features_path.empty()) {
    fm = spectral::load_feature_matrix(
        stage.input_from_stage("preprocess", "features.uwfm").string());
  } else {
    stage.record_external_input(features_path);
    fm = spectral::load_feature_matrix(features_path);
  }

  if (labels_path.empty()) labels_path = default_labels_path(cfg).string();
  stage.record_external_input(labels_path);
  const auto labels_km = spectral::read_labels_csv(labels_path);
  const auto y = scaled_labels_for(fm, labels_km);

  // the training receiver's selection applies to any compatible matrix
  linalg::Matrix rows;
  if (cfg.with_fs) {
    const auto indices = pca::load_selected_indices(
        stage.input_from_stage("select", "selected_indices.uwsl").string());
    rows = pca::build_selected_matrix(fm.values, indices);
  } else {
    rows = fm.values;
  }

  const auto plan = make_plan(cfg, rows.cols());
  auto model = models::build_localizer(plan, mlp_spec(cfg), cfg.seed,
                                       /*frozen=*/false);
  const auto report = nn::load_checkpoint(model.store, model_path);
  if (report.loaded.size() != model.store.entries().size())
    fail(ErrorCode::MissingCheckpoint,
         model_path + " does not cover the configured model (" +
             std::to_string(report.loaded.size()) + " of " +
             std::to_string(model.store.entries().size()) + " arrays)");

  std::vector<double> predictions;
  const double mse =
      train::evaluate_mse(model, rows, y, &predictions, cfg.batch_size);
  write_metrics_csv(stage.out("evaluation.csv"),
                    {{"mse", mse}, {"n", static_cast<double>(rows.rows())}});
  train::write_predictions_csv(y, predictions, fm.label_min, fm.label_max,
                               stage.out("predictions.csv").string());
  stage.finish();
  std::cout << "evaluate: MSE " << mse << " over " << rows.rows()
            << " rows -> " << stage.dir.string() << "\n";
  return 0;
}

void write_predicted_vs_true_svg(const fs::path& predictions_csv,
                                 const fs::path& svg_path) {
  auto in = detail::open_in(predictions_csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<double, double>> km;  // true, predicted
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() == 5) km.push_back({std::stod(cells[3]), std::stod(cells[4])});
  }
  auto out = detail::open_out(svg_path.string());
  const double w = 640, h = 480, margin = 40;
  double lo = 1e300, hi = -1e300;
  for (auto [t, p] : km) {
    lo = std::min({lo, t, p});
    hi = std::max({hi, t, p});
  }
  if (km.empty()) {
    lo = 0;
    hi = 1;
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const auto x_of = [&](std::size_t i) {
    return margin + (w - 2 * margin) * (km.size() > 1 ? double(i) / (km.size() - 1) : 0.5);
  };
  const auto y_of = [&](double v) {
    return h - margin - (h - 2 * margin) * (v - lo) / span;
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"black\" points=\"";
  for (std::size_t i = 0; i < km.size(); ++i)
    out << x_of(i) << ',' << y_of(km[i].first) << ' ';
  out << "\"/>\n";
  for (std::size_t i = 0; i < km.size(); ++i)
    out << "<circle cx=\"" << x_of(i) << "\" cy=\"" << y_of(km[i].second)
        << "\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"16\" font-size=\"13\">range (km): "
         "line = true, dots = predicted</text>\n";
  out << "</svg>\n";
}

int cmd_report(const ExperimentConfig& cfg, const std::string& compare_workdir) {
  WorkdirLock lock(fs::path(cfg.workdir));
  Stage stage(cfg, "report");

  const auto framework = read_metrics_csv(
      stage.input_from_stage("train-localizer", "metrics.csv"));
  const auto supervised = read_metrics_csv(
      stage.input_from_stage("train-supervised", "metrics.csv"));

  std::string receiver = "receiver";
  {
    const fs::path pre_manifest =
        fs::path(cfg.workdir) / "preprocess" / "manifest.json";
    if (fs::exists(pre_manifest)) {
      std::ifstream in(pre_manifest);
      json m;
      in >> m;
      if (m.contains("receiver_id")) receiver = m["receiver_id"].get<std::string>();
    }
  }

  train::ExperimentReport report;
  report.rows.push_back(
      {receiver, framework.at("test_mse"), supervised.at("test_mse")});
  train::write_report_csv(report, stage.out("report.csv").string());

  json summary;
  summary["receiver"] = receiver;
  summary["framework_test_mse"] = framework.at("test_mse");
  summary["supervised_test_mse"] = supervised.at("test_mse");
  summary["framework_train_mse"] = framework.at("train_mse");
  summary["supervised_train_mse"] = supervised.at("train_mse");
  summary["modulus"] = cfg.modulus;
  summary["with_fs"] = cfg.with_fs;

  if (!compare_workdir.empty()) {
    // `--compare` points at the run whose networks skipped feature selection
    const auto other_framework = read_metrics_csv(
        fs::path(compare_workdir) / "train-localizer" / "metrics.csv");
    const auto other_supervised = read_metrics_csv(
        fs::path(compare_workdir) / "train-supervised" / "metrics.csv");
    const auto fw_res = train::residual_report(other_framework.at("test_mse"),
                                               framework.at("test_mse"));
    const auto sup_res = train::residual_report(other_supervised.at("test_mse"),
                                                supervised.at("test_mse"));
    {
      auto out = detail::open_out(stage.out("residual.csv").string());
      out << "model,mse_without_fs,mse_with_fs,residual,percent_of_residual\n";
      out << "framework," << detail::format_double(other_framework.at("test_mse"))
          << ',' << detail::format_double(framework.at("test_mse")) << ','
          << detail::format_double(fw_res.residual) << ','
          << detail::format_double(fw_res.percent_of_residual) << "\n";
      out << "supervised,"
          << detail::format_double(other_supervised.at("test_mse")) << ','
          << detail::format_double(supervised.at("test_mse")) << ','
          << detail::format_double(sup_res.residual) << ','
          << detail::format_double(sup_res.percent_of_residual) << "\n";
    }
    std::vector<train::TimingRow> timing;
    for (const char* step : {"train-cae", "train-localizer",
                             "train-supervised"}) {
      const fs::path ours = fs::path(cfg.workdir) / step / "train_seconds.txt";
      const fs::path theirs = fs::path(compare_workdir) / step / "train_seconds.txt";
      if (fs::exists(ours) && fs::exists(theirs))
        timing.push_back(
            {step, read_seconds_file(theirs), read_seconds_file(ours)});
    }
    if (!timing.empty())
      train::write_timing_csv(timing,
                              stage.out_volatile("timing.csv").string());
    summary["residual_percent_framework"] = fw_res.percent_of_residual;
    summary["residual_percent_supervised"] = sup_res.percent_of_residual;
  }

  {
    auto out = detail::open_out(stage.out("summary.json").string());
    out << summary.dump(2) << "\n";
  }
  if (cfg.emit_svg) {
    write_predicted_vs_true_svg(
        fs::path(cfg.workdir) / "train-localizer" / "predictions.csv",
        stage.out("predicted_vs_true.svg"));
  }
  stage.finish();
  std::cout << "report: framework " << framework.at("test_mse")
            << " vs supervised " << supervised.at("test_mse") << " -> "
            << stage.dir.string() << "\n";
  return 0;
}

int cmd_describe(const ExperimentConfig& cfg, std::size_t m_flag) {
  std::size_t width = 750;
  if (cfg.with_fs) {
    if (m_flag > 0) {
      width = m_flag;
    } else {
      const fs::path indices_path =
          fs::path(cfg.workdir) / "select" / "selected_indices.uwsl";
      if (fs::exists(indices_path))
        width = pca::load_selected_indices(indices_path.string()).size();
      else
        fail(ErrorCode::ConfigError,
             "with feature selection enabled, pass --m or run `uwloc select` "
             "first so the selected width is known");
    }
  }
  const auto plan = make_plan(cfg, width);
  auto cae = models::build_cae(plan, cfg.seed);
  std::cout << "== convolutional autoencoder ==\n" << models::describe(cae);
  auto localizer =
      models::build_localizer(plan, mlp_spec(cfg), cfg.seed, /*frozen=*/false);
  std::cout << "\n== encoder-MLP localizer ==\n" << models::describe(localizer);
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg);

}  // namespace

// defined after the anonymous namespace so it can live in its own block below
namespace {

struct LayerCheckSetup {
  nn::ParameterStore store;
  std::unique_ptr<nn::Layer> layer;
  nn::Tensor input;
  nn::Tensor target;
  nn::Tensor input_grad;
  nn::Mode mode = nn::Mode::Train;
};

double layer_loss(LayerCheckSetup& s) {
  const nn::Tensor out = s.layer->forward(s.input, s.mode);
  return nn::mse_loss(out, s.target).first;
}

void layer_grad(LayerCheckSetup& s) {
  s.store.zero_grads();
  const nn::Tensor out = s.layer->forward(s.input, s.mode);
  auto [loss, grad] = nn::mse_loss(out, s.target);
  s.input_grad = s.layer->backward(grad);
}

double check_layer(const std::string& label, LayerCheckSetup& s, double h,
                   std::size_t max_coords, bool check_input, std::ostream& log) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : s.input.data) v = dist(rng);
  const auto out_shape = s.layer->infer_shape(s.input.shape);
  s.target = nn::Tensor(out_shape);
  for (double& v : s.target.data) v = dist(rng);

  auto targets = nn::parameter_targets(s.store);
  if (check_input) targets.push_back({"input", &s.input, &s.input_grad});
  const auto report = nn::check_gradients([&] { return layer_loss(s); },
                                          [&] { layer_grad(s); }, targets, h,
                                          max_coords, 11);
  log << "  " << label << ": max relative error " << report.max_rel_error << "\n";
  return report.max_rel_error;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  (void)cfg;
  std::ostream& log = std::cout;
  log << "central finite differences, h=1e-5, 64-bit\n";
  double worst = 0.0;
  std::mt19937_64 init(3);

  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::Dense>(s.store, "dense", 5, 4, init);
    s.input = nn::Tensor({3, 5});
    worst = std::max(worst, check_layer("Dense", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::Conv1d>(s.store, "conv1d", 2, 3, 3, 2, init);
    s.input = nn::Tensor({2, 2, 9});
    worst = std::max(worst, check_layer("Conv1D", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::Conv2d>(s.store, "conv2d", 2, 3, 3, 2, init);
    s.input = nn::Tensor({2, 2, 8, 8});
    worst = std::max(worst, check_layer("Conv2D", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::ConvTranspose1d>(s.store, "tconv1d", 3, 2, 4,
                                                    2, 9, init);
    s.input = nn::Tensor({2, 3, 4});
    worst = std::max(worst, check_layer("TransposedConv1D", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::ConvTranspose2d>(s.store, "tconv2d", 2, 2, 4,
                                                    2, 9, 9, init);
    s.input = nn::Tensor({2, 2, 4, 4});
    worst = std::max(worst, check_layer("TransposedConv2D", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::BatchNorm>(s.store, "bn", 3);
    s.input = nn::Tensor({4, 3, 6});
    worst = std::max(worst, check_layer("BatchNorm", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::LeakyRelu>("lrelu", 0.01);
    s.input = nn::Tensor({3, 7});
    worst = std::max(worst, check_layer("LeakyReLU", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.layer = std::make_unique<nn::Sigmoid>("sigmoid");
    s.input = nn::Tensor({3, 7});
    worst = std::max(worst, check_layer("Sigmoid", s, 1e-5, 0, true, log));
  }
  {
    LayerCheckSetup s;
    s.mode = nn::Mode::Eval;  // stochastic in train mode
    std::mt19937_64 rng(5);
    s.layer = std::make_unique<nn::Dropout>("dropout", 0.2, &rng);
    s.input = nn::Tensor({3, 7});
    worst = std::max(worst, check_layer("Dropout(eval)", s, 1e-5, 0, true, log));
  }

  // full selected-width encoder, sampled coordinates
  {
    auto plan = models::plan_encoder(121, models::Variant::Original, true);
    auto graph = models::build_cae(plan, 17);
    nn::Tensor input({1, 1, 121});
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : input.data) v = dist(rng);
    const std::size_t enc_layers = graph.encoder_layer_count;
    nn::Tensor target;
    {
      const nn::Tensor probe = graph.forward_layers(0, enc_layers, input,
                                                    nn::Mode::Train);
      target = nn::Tensor(probe.shape);
      for (double& v : target.data) v = dist(rng);
    }
    nn::Tensor input_grad;
    const auto loss_fn = [&] {
      const nn::Tensor out =
          graph.forward_layers(0, enc_layers, input, nn::Mode::Train);
      return nn::mse_loss(out, target).first;
    };
    const auto grad_fn = [&] {
      graph.store.zero_grads();
      const nn::Tensor out =
          graph.forward_layers(0, enc_layers, input, nn::Mode::Train);
      auto [loss, grad] = nn::mse_loss(out, target);
      nn::Tensor g = grad;
      for (std::size_t i = enc_layers; i > 0; --i)
        g = graph.layers[i - 1]->backward(g);
      input_grad = g;
    };
    auto targets = nn::parameter_targets(graph.store);
    std::erase_if(targets, [](const nn::GradCheckTarget& t) {
      return t.name.rfind("dec.", 0) == 0;
    });
    targets.push_back({"input", &input, &input_grad});
    const auto report =
        nn::check_gradients(loss_fn, grad_fn, targets, 1e-5, 12, 29);
    log << "  with-FS encoder (M=121): max relative error "
        << report.max_rel_error << "\n";
    worst = std::max(worst, report.max_rel_error);
  }

  log << "overall max relative error: " << worst
      << (worst < 1e-4 ? " (PASS, threshold 1e-4)\n" : " (FAIL, threshold 1e-4)\n");
  return worst < 1e-4 ? 0 : 1;
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{"interpretable spectral feature selection and semi-supervised "
               "single-receiver range estimation"};
  app.require_subcommand(1);

  struct Flags {
    std::string config_file;
    std::vector<std::string> sets;
    std::map<std::string, std::string> direct;  // key -> value
    bool with_fs = false, without_fs = false;
  };
  auto flags = std::make_shared<Flags>();

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags->config_file, "experiment config file");
    cmd->add_option("--set", flags->sets,
                    "override a config key (key=value, repeatable)");
    const auto direct = [&](const std::string& flag, const std::string& key,
                            const std::string& help) {
      cmd->add_option_function<std::string>(
          flag,
          [flags, key](const std::string& v) { flags->direct[key] = v; }, help);
    };
    direct("--workdir", "paths.workdir", "artifact directory");
    direct("--signal", "paths.signal", "input signal (wav or raw f32)");
    direct("--signal-meta", "paths.signal_meta", "sidecar for raw f32 input");
    direct("--labels", "paths.labels", "labels CSV (index,range_km)");
    direct("--seed", "train.seed", "seed for every stochastic choice");
    direct("--precision", "train.precision", "f64 or f32 (checkpoint storage)");
    direct("--threads", "train.threads", "worker threads for kernels");
    direct("--epsilon", "selection.epsilon", "selection threshold");
    direct("--components", "selection.components", "number of PCs (A)");
    direct("--frame-seconds", "preprocess.frame_seconds", "frame length");
    direct("--epochs", "train.epochs", "training epochs per step");
    direct("--batch-size", "train.batch_size", "training batch size");
    direct("--modulus", "split.modulus", "label split modulus (2, 4 or 8)");
    direct("--variant", "model.variant",
           "original, structure1 or structure2");
    cmd->add_flag("--with-fs", flags->with_fs, "use selected features");
    cmd->add_flag("--without-fs", flags->without_fs, "use the full spectrum");
  };

  std::string synth_config_path, model_path, features_path, labels_path,
      compare_workdir;
  std::size_t describe_m = 0;

  auto* synth_cmd =
      app.add_subcommand("synth", "generate a controlled synthetic dataset");
  synth_cmd->add_option("--synth-config", synth_config_path,
                        "generator configuration file");
  add_common(synth_cmd);
  auto* preprocess_cmd = app.add_subcommand(
      "preprocess", "frame the signal and build the scaled feature matrix");
  add_common(preprocess_cmd);
  auto* select_cmd = app.add_subcommand(
      "select", "PCA/PCR feature selection and correlation loadings");
  add_common(select_cmd);
  auto* train_cae_cmd =
      app.add_subcommand("train-cae", "step one: train the autoencoder");
  add_common(train_cae_cmd);
  auto* train_loc_cmd = app.add_subcommand(
      "train-localizer", "step two: frozen encoder + MLP on the labeled split");
  add_common(train_loc_cmd);
  auto* train_sup_cmd = app.add_subcommand(
      "train-supervised", "control: same network, purely supervised");
  add_common(train_sup_cmd);
  auto* evaluate_cmd = app.add_subcommand(
      "evaluate", "run a trained localizer against a feature matrix");
  evaluate_cmd->add_option("--model", model_path, "localizer checkpoint");
  evaluate_cmd->add_option("--features", features_path, "feature matrix file");
  evaluate_cmd->add_option("--eval-labels", labels_path, "labels for the matrix");
  add_common(evaluate_cmd);
  auto* report_cmd =
      app.add_subcommand("report", "tables and plots for a finished run");
  report_cmd->add_option("--compare", compare_workdir,
                         "workdir of the run without feature selection");
  add_common(report_cmd);
  auto* describe_cmd =
      app.add_subcommand("describe", "print the layer tables for the plans");
  describe_cmd->add_option("--m", describe_m, "selected feature count");
  add_common(describe_cmd);
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every layer kind");
  add_common(gradcheck_cmd);

  std::vector<const char*> argv;
  argv.push_back("uwloc");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& item : flags->sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "--set expects key=value, got: " + item);
    overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  for (const auto& [key, value] : flags->direct) overrides.emplace_back(key, value);
  if (flags->with_fs) overrides.emplace_back("model.with_fs", "true");
  if (flags->without_fs) overrides.emplace_back("model.with_fs", "false");

  const ExperimentConfig cfg = config::resolve_config(flags->config_file, overrides);
  echo_deviations(cfg);
  nn::set_num_threads(cfg.threads);

  std::optional<uint64_t> seed_override;
  if (flags->direct.count("train.seed")) seed_override = cfg.seed;

  if (synth_cmd->parsed()) return cmd_synth(cfg, synth_config_path, seed_override);
  if (preprocess_cmd->parsed()) return cmd_preprocess(cfg);
  if (select_cmd->parsed()) return cmd_select(cfg);
  if (train_cae_cmd->parsed()) return cmd_train_cae(cfg);
  if (train_loc_cmd->parsed()) return run_step_two(cfg, /*supervised=*/false);
  if (train_sup_cmd->parsed()) return run_step_two(cfg, /*supervised=*/true);
  if (evaluate_cmd->parsed())
    return cmd_evaluate(cfg, model_path, features_path, labels_path);
  if (report_cmd->parsed()) return cmd_report(cfg, compare_workdir);
  if (describe_cmd->parsed()) return cmd_describe(cfg, describe_m);
  if (gradcheck_cmd->parsed()) return cmd_gradcheck(cfg);
  return 2;
}

}  // namespace

int run(std::vector<std::string> args) {
  try {
    return dispatch(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::UnknownKey:
      case ErrorCode::TypeError:
        return 2;
      case ErrorCode::MissingArtifact:
      case ErrorCode::MissingCheckpoint:
      case ErrorCode::IoError:
        return 3;
      case ErrorCode::DivergenceDetected:
        return 4;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace uwloc::cli
