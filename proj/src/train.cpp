#include "uwloc/train.hpp"

#include <chrono>
#include <cmath>

#include "io_util.hpp"

namespace uwloc::train {

using detail::format_double;
using models::ModelGraph;
using nn::Mode;
using nn::Tensor;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

nn::AdamConfig adam_config(const TrainConfig& cfg, double lr) {
  return {lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
}

void check_finite(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    fail(ErrorCode::DivergenceDetected,
         "loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
             std::to_string(batch) + "; lower the learning rate");
}

Tensor label_tensor(std::span<const double> labels,
                    std::span<const std::size_t> rows) {
  Tensor t({rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i) t.data[i] = labels[rows[i]];
  return t;
}

}  // namespace

CaeRunResult train_cae(const dataset::StepOneDataset& ds,
                       const models::EncoderPlan& plan, const TrainConfig& cfg) {
  if (ds.rows.cols() != plan.input_width)
    fail(ErrorCode::ShapeMismatch, "dataset width " + std::to_string(ds.rows.cols()) +
                                       " != plan input width " +
                                       std::to_string(plan.input_width));
  CaeRunResult result;
  result.model = models::build_cae(plan, cfg.seed);
  const auto adam = adam_config(cfg, cfg.lr_step_one);
  dataset::BatchIterator batches(ds.rows.rows(), cfg.batch_size,
                                 derive_seed(cfg.seed, /*stream=*/2));

  const double t0 = now_seconds();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (const auto& rows : batches.next_epoch()) {
      const Tensor x = result.model.batch_from_rows(ds.rows, rows);
      result.model.store.zero_grads();
      const Tensor reconstruction = result.model.forward(x, Mode::Train);
      auto [loss, grad] = nn::mse_loss(reconstruction, x);
      check_finite(loss, epoch, batch_index);
      result.model.backward(grad);
      nn::adam_step(result.model.store, adam);
      epoch_loss += loss * static_cast<double>(rows.size());
      seen += rows.size();
      ++batch_index;
    }
    result.curve.epoch_mse.push_back(epoch_loss / static_cast<double>(seen));
  }
  result.wall_seconds = now_seconds() - t0;
  return result;
}

namespace {

RegressionRunResult train_regressor(ModelGraph model,
                                    const dataset::StepTwoDataset& ds,
                                    const TrainConfig& cfg) {
  RegressionRunResult result;
  result.model = std::move(model);
  const auto adam = adam_config(cfg, cfg.lr_step_two);
  dataset::BatchIterator batches(ds.train_rows.rows(), cfg.batch_size,
                                 derive_seed(cfg.seed, /*stream=*/3));

  const double t0 = now_seconds();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (const auto& rows : batches.next_epoch()) {
      const Tensor x = result.model.batch_from_rows(ds.train_rows, rows);
      const Tensor target = label_tensor(ds.train_labels, rows);
      result.model.store.zero_grads();
      const Tensor pred = result.model.forward(x, Mode::Train);
      auto [loss, grad] = nn::mse_loss(pred, target);
      check_finite(loss, epoch, batch_index);
      result.model.backward(grad);
      nn::adam_step(result.model.store, adam);
      epoch_loss += loss * static_cast<double>(rows.size());
      seen += rows.size();
      ++batch_index;
    }
    result.curve.epoch_mse.push_back(epoch_loss / static_cast<double>(seen));
  }
  result.wall_seconds = now_seconds() - t0;

  result.train_mse = evaluate_mse(result.model, ds.train_rows, ds.train_labels,
                                  nullptr, cfg.batch_size);
  result.test_mse = evaluate_mse(result.model, ds.test_rows, ds.test_labels,
                                 nullptr, cfg.batch_size);
  return result;
}

}  // namespace

RegressionRunResult train_localizer(const dataset::StepTwoDataset& ds,
                                    const models::EncoderPlan& plan,
                                    const models::MlpSpec& mlp,
                                    const std::string& encoder_checkpoint,
                                    const TrainConfig& cfg, bool frozen) {
  return train_regressor(
      models::build_localizer(plan, mlp, cfg.seed, frozen, encoder_checkpoint), ds,
      cfg);
}

RegressionRunResult train_supervised(const dataset::StepTwoDataset& ds,
                                     const models::EncoderPlan& plan,
                                     const models::MlpSpec& mlp,
                                     const TrainConfig& cfg) {
  return train_regressor(
      models::build_localizer(plan, mlp, cfg.seed, /*frozen=*/false), ds, cfg);
}

double evaluate_mse(ModelGraph& model, const linalg::Matrix& rows,
                    std::span<const double> labels,
                    std::vector<double>* predictions, std::size_t batch_size) {
  if (labels.size() != rows.rows())
    fail(ErrorCode::ShapeMismatch, "evaluate_mse: label count != row count");
  if (predictions) predictions->assign(rows.rows(), 0.0);
  double sum_sq = 0.0;
  std::vector<std::size_t> chunk;
  for (std::size_t start = 0; start < rows.rows(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, rows.rows());
    chunk.resize(end - start);
    for (std::size_t i = start; i < end; ++i) chunk[i - start] = i;
    const Tensor x = model.batch_from_rows(rows, chunk);
    const Tensor pred = model.forward(x, Mode::Eval);
    if (pred.numel() != chunk.size())
      fail(ErrorCode::ShapeMismatch, "model output is not one value per sample");
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double p = pred.data[i];
      const double d = p - labels[start + i];
      sum_sq += d * d;
      if (predictions) (*predictions)[start + i] = p;
    }
  }
  return sum_sq / static_cast<double>(rows.rows());
}

void write_predictions_csv(std::span<const double> labels,
                           std::span<const double> predictions, double label_min,
                           double label_max, const std::string& path) {
  auto out = detail::open_out(path);
  const double span = label_max - label_min;
  out << "index,true_scaled,pred_scaled,true_km,pred_km\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << ',' << format_double(labels[i]) << ','
        << format_double(predictions[i]) << ','
        << format_double(labels[i] * span + label_min) << ','
        << format_double(predictions[i] * span + label_min) << "\n";
  }
}

void write_loss_curve_csv(const LossCurve& curve, const std::string& path) {
  auto out = detail::open_out(path);
  out << "epoch,mse\n";
  for (std::size_t e = 0; e < curve.epoch_mse.size(); ++e)
    out << (e + 1) << ',' << format_double(curve.epoch_mse[e]) << "\n";
}

ResidualReport residual_report(double mse_without_fs, double mse_with_fs) {
  if (mse_without_fs == 0.0)
    fail(ErrorCode::DivisionByZero, "without-FS MSE is zero");
  ResidualReport r;
  r.residual = mse_without_fs - mse_with_fs;
  r.percent_of_residual = 100.0 * r.residual / mse_without_fs;
  return r;
}

void write_timing_csv(std::span<const TimingRow> rows, const std::string& path) {
  auto out = detail::open_out(path);
  out << "label,seconds_without_fs,seconds_with_fs,percent_reduction\n";
  for (const auto& row : rows) {
    out << row.label << ',' << format_double(row.seconds_without_fs) << ','
        << format_double(row.seconds_with_fs) << ','
        << format_double(100.0 * row.reduction()) << "\n";
  }
}

double ExperimentReport::mean_framework() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.framework_mse;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double ExperimentReport::mean_supervised() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.supervised_mse;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

void write_report_csv(const ExperimentReport& report, const std::string& path) {
  auto out = detail::open_out(path);
  out << "receiver,framework_mse,supervised_mse\n";
  for (const auto& r : report.rows)
    out << r.receiver << ',' << format_double(r.framework_mse) << ','
        << format_double(r.supervised_mse) << "\n";
  out << "mean," << format_double(report.mean_framework()) << ','
      << format_double(report.mean_supervised()) << "\n";
}

}  // namespace uwloc::train
