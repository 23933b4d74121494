#ifndef UWLOC_TRAIN_HPP
#define UWLOC_TRAIN_HPP

#include <string>
#include <vector>

#include "uwloc/dataset.hpp"
#include "uwloc/models.hpp"

namespace uwloc::train {

enum class Precision { F64, F32 };

struct TrainConfig {
  double lr_step_one = 1e-4;
  double lr_step_two = 5e-5;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  uint64_t seed = 1;
  Precision precision = Precision::F64;  // F32 selects float32 checkpoint storage
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

struct LossCurve {
  std::vector<double> epoch_mse;
};

struct CaeRunResult {
  models::ModelGraph model;
  LossCurve curve;
  double wall_seconds = 0.0;  // training loop only
};

// Step one: reconstruction training on every row, labels never touched.
CaeRunResult train_cae(const dataset::StepOneDataset& ds,
                       const models::EncoderPlan& plan, const TrainConfig& cfg);

struct RegressionRunResult {
  models::ModelGraph model;
  LossCurve curve;        // train-set loss per epoch
  double train_mse = 0.0;
  double test_mse = 0.0;
  double wall_seconds = 0.0;
};

// Step two: pretrained (optionally frozen) encoder + MLP on the labeled split.
RegressionRunResult train_localizer(const dataset::StepTwoDataset& ds,
                                    const models::EncoderPlan& plan,
                                    const models::MlpSpec& mlp,
                                    const std::string& encoder_checkpoint,
                                    const TrainConfig& cfg, bool frozen = true);

// Control: identical graph trained from random initialization, nothing frozen.
RegressionRunResult train_supervised(const dataset::StepTwoDataset& ds,
                                     const models::EncoderPlan& plan,
                                     const models::MlpSpec& mlp,
                                     const TrainConfig& cfg);

// Eval-mode mean squared error in scaled-label units; optionally returns the
// per-sample predictions.
double evaluate_mse(models::ModelGraph& model, const linalg::Matrix& rows,
                    std::span<const double> labels,
                    std::vector<double>* predictions = nullptr,
                    std::size_t batch_size = 32);

// index,true_scaled,pred_scaled,true_km,pred_km
void write_predictions_csv(std::span<const double> labels,
                           std::span<const double> predictions, double label_min,
                           double label_max, const std::string& path);

void write_loss_curve_csv(const LossCurve& curve, const std::string& path);

struct ResidualReport {
  double residual = 0.0;             // without-FS minus with-FS
  double percent_of_residual = 0.0;  // 100 * residual / without-FS
};

ResidualReport residual_report(double mse_without_fs, double mse_with_fs);

struct TimingRow {
  std::string label;
  double seconds_without_fs = 0.0;
  double seconds_with_fs = 0.0;
  double reduction() const { return 1.0 - seconds_with_fs / seconds_without_fs; }
};

// label,seconds_without_fs,seconds_with_fs,percent_reduction
void write_timing_csv(std::span<const TimingRow> rows, const std::string& path);

struct ReportRow {
  std::string receiver;
  double framework_mse = 0.0;
  double supervised_mse = 0.0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  double mean_framework() const;
  double mean_supervised() const;
};

// receiver,framework_mse,supervised_mse with a trailing mean row.
void write_report_csv(const ExperimentReport& report, const std::string& path);

}  // namespace uwloc::train

#endif  // UWLOC_TRAIN_HPP
