#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "test_helpers.hpp"
#include "uwloc/dataset.hpp"
#include "uwloc/synth.hpp"
#include "uwloc/train.hpp"

using namespace uwloc;
using namespace uwloc::train;

namespace {

// small learnable problem: rows drawn around a ramp, labels follow the ramp
struct TinyProblem {
  linalg::Matrix rows;
  std::vector<double> labels;
};

TinyProblem make_problem(std::size_t n, std::size_t width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  TinyProblem p;
  p.rows = linalg::Matrix(n, width);
  p.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    p.labels[i] = 0.1 + 0.8 * t;
    for (std::size_t j = 0; j < width; ++j) {
      const double base = 0.5 + 0.4 * std::sin(0.05 * double(j) + 3.0 * t);
      p.rows(i, j) = std::clamp(base + noise(rng), 0.0, 1.0);
    }
  }
  return p;
}

models::EncoderPlan small_plan() {
  return models::plan_encoder(114, models::Variant::Structure2, true);
}

}  // namespace

TEST_CASE("train_cae loss trend and determinism") {
  const auto p = make_problem(12, 114, 1);
  const auto ds = dataset::build_step_one(p.rows);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.seed = 3;
  cfg.lr_step_one = 1e-3;

  auto a = train_cae(ds, small_plan(), cfg);
  CHECK(a.curve.epoch_mse.size() == 8);
  CHECK(a.curve.epoch_mse.back() < a.curve.epoch_mse.front());
  for (double v : a.curve.epoch_mse) CHECK(std::isfinite(v));

  auto b = train_cae(ds, small_plan(), cfg);
  CHECK(a.curve.epoch_mse == b.curve.epoch_mse);  // identical seeds, identical curves
}

TEST_CASE("train_cae with zero learning rate changes nothing") {
  const auto p = make_problem(6, 114, 2);
  const auto ds = dataset::build_step_one(p.rows);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 6;  // full batch so every epoch sees the same statistics
  cfg.seed = 4;
  cfg.lr_step_one = 0.0;

  auto before = models::build_cae(small_plan(), cfg.seed);
  const auto result = train_cae(ds, small_plan(), cfg);
  // trainable parameters identical to a freshly built net with the same seed
  for (const auto& q : before.store.entries()) {
    if (!q->trainable) continue;  // running stats do move in train mode
    const auto* trained = result.model.store.find(q->name);
    REQUIRE(trained != nullptr);
    CHECK(trained->value.data == q->value.data);
  }
  for (std::size_t e = 1; e < result.curve.epoch_mse.size(); ++e)
    CHECK(result.curve.epoch_mse[e] ==
          doctest::Approx(result.curve.epoch_mse[0]).epsilon(1e-12));
}

TEST_CASE("train_cae detects divergence") {
  const auto p = make_problem(6, 114, 5);
  const auto ds = dataset::build_step_one(p.rows);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 6;
  cfg.lr_step_one = 1e150;
  try {
    train_cae(ds, small_plan(), cfg);
    FAIL("expected DivergenceDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
  }
}

TEST_CASE("step-one never needs labels; poisoned labels stay untouched") {
  auto p = make_problem(8, 114, 6);
  for (double& v : p.labels) v = std::nan("");  // poison
  const auto ds = dataset::build_step_one(p.rows);  // labels not even passed
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const auto result = train_cae(ds, small_plan(), cfg);
  for (double v : result.curve.epoch_mse) CHECK(std::isfinite(v));
}

TEST_CASE("localizer trains with a frozen encoder and improves on train loss") {
  namespace fs = std::filesystem;
  const auto p = make_problem(40, 114, 7);
  const auto plan = small_plan();
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.seed = 11;
  cfg.lr_step_one = 1e-3;
  cfg.lr_step_two = 2e-3;

  const auto ds1 = dataset::build_step_one(p.rows);
  auto cae = train_cae(ds1, plan, cfg);
  const auto ckpt = fs::temp_directory_path() / "uwloc_test_train_cae.uwnn";
  nn::save_checkpoint(cae.model.store, ckpt.string());

  const auto ds2 = dataset::build_step_two(p.rows, p.labels, {2});
  models::MlpSpec mlp{{64, 16}, 0.0};
  const auto result = train_localizer(ds2, plan, mlp, ckpt.string(), cfg, true);
  CHECK(result.curve.epoch_mse.back() < result.curve.epoch_mse.front());
  CHECK(std::isfinite(result.test_mse));

  // frozen encoder bitwise equal to the checkpoint
  for (const auto& q : cae.model.store.entries()) {
    if (q->name.rfind("enc.", 0) != 0) continue;
    const auto* loaded = result.model.store.find(q->name);
    REQUIRE(loaded != nullptr);
    CHECK(loaded->value.data == q->value.data);
  }
  fs::remove(ckpt);
}

TEST_CASE("supervised control touches only the labeled training rows") {
  const auto p = make_problem(24, 114, 9);
  auto ds = dataset::build_step_two(p.rows, p.labels, {2});
  // poison the held-out rows: training must stay finite because it never reads them
  for (std::size_t i = 0; i < ds.test_rows.rows(); ++i)
    for (std::size_t j = 0; j < ds.test_rows.cols(); ++j)
      ds.test_rows(i, j) = std::nan("");
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 6;
  cfg.lr_step_two = 1e-3;
  const auto result = train_supervised(ds, small_plan(), {{16}, 0.0}, cfg);
  for (double v : result.curve.epoch_mse) CHECK(std::isfinite(v));
  CHECK(std::isnan(result.test_mse));  // poisoned rows only reach evaluation
}

TEST_CASE("supervised rerun with the same seed matches exactly") {
  const auto p = make_problem(20, 114, 10);
  const auto ds = dataset::build_step_two(p.rows, p.labels, {2});
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 5;
  cfg.seed = 21;
  const auto a = train_supervised(ds, small_plan(), {{16}, 0.2}, cfg);
  const auto b = train_supervised(ds, small_plan(), {{16}, 0.2}, cfg);
  CHECK(a.curve.epoch_mse == b.curve.epoch_mse);
  CHECK(a.test_mse == b.test_mse);
}

TEST_CASE("evaluate_mse with a constant-0.5 predictor") {
  // zeroed final dense + sigmoid emits exactly 0.5
  const auto plan = small_plan();
  auto model = models::build_localizer(plan, {{8}, 0.0}, 1, false);
  for (const auto& p : model.store.entries())
    if (p->name.rfind("mlp.", 0) == 0)
      std::fill(p->value.data.begin(), p->value.data.end(), 0.0);

  std::mt19937_64 rng(33);
  const std::size_t n = 4000;
  linalg::Matrix rows(n, 114);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = u(rng);
    for (std::size_t j = 0; j < 114; ++j) rows(i, j) = u(rng);
  }
  std::vector<double> preds;
  const double mse = evaluate_mse(model, rows, labels, &preds, 256);
  CHECK(preds[0] == doctest::Approx(0.5));
  CHECK(mse == doctest::Approx(1.0 / 12.0).epsilon(0.05));  // Var(U(0,1))

  // predictions equal to labels give exactly zero
  const double zero = evaluate_mse(model, rows, preds);
  CHECK(zero == doctest::Approx(0.0));
}

TEST_CASE("evaluation is eval-mode: repeated calls identical despite dropout") {
  const auto p = make_problem(10, 114, 12);
  auto model = models::build_localizer(small_plan(), {{16}, 0.5}, 2, false);
  std::vector<double> first, second;
  evaluate_mse(model, p.rows, p.labels, &first);
  evaluate_mse(model, p.rows, p.labels, &second);
  CHECK(first == second);
}

TEST_CASE("residual formulas reproduce the published pairs") {
  {
    const auto r = residual_report(0.58, 0.48);
    CHECK(r.residual == doctest::Approx(0.10).epsilon(1e-12));
    CHECK(std::round(r.percent_of_residual * 100.0) / 100.0 ==
          doctest::Approx(17.24));
  }
  {
    const auto r = residual_report(0.85, 0.47);
    CHECK(r.residual == doctest::Approx(0.38).epsilon(1e-12));
    CHECK(std::round(r.percent_of_residual * 100.0) / 100.0 ==
          doctest::Approx(44.71));
  }
  {
    const auto r = residual_report(0.4, 0.4);
    CHECK(r.residual == 0.0);
    CHECK(r.percent_of_residual == 0.0);
  }
  CHECK_THROWS_AS(residual_report(0.0, 0.1), Error);
}

TEST_CASE("timing rows compute the percentage of reduction") {
  const TimingRow row{"step-one", 200.0, 10.0};
  CHECK(row.reduction() == doctest::Approx(0.95));
  const TimingRow same{"self", 10.0, 10.0};
  CHECK(same.reduction() == doctest::Approx(0.0));
}

TEST_CASE("experiment report mean is the arithmetic mean of the rows") {
  ExperimentReport report;
  report.rows = {{"r1", 0.2, 0.3}, {"r2", 0.4, 0.5}, {"r3", 0.6, 0.7}};
  CHECK(report.mean_framework() == doctest::Approx(0.4));
  CHECK(report.mean_supervised() == doctest::Approx(0.5));
}
