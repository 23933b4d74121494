#ifndef UWLOC_PCA_HPP
#define UWLOC_PCA_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uwloc/linalg.hpp"

namespace uwloc::pca {

using linalg::Matrix;
using linalg::Vector;

struct PcaModel {
  Vector column_means;             // K
  Matrix scores;                   // T = U*S, N x A
  Matrix loadings;                 // P = V, K x A, orthonormal columns
  Vector singular_values;          // A, descending
  Vector explained_variance_ratio; // A, each s_a^2 / total variance
  double total_variance = 0.0;     // ||Xc||_F^2
  std::size_t n_components = 0;
};

struct TruncatedSvd {
  Matrix u;  // N x A, orthonormal columns
  Vector s;  // A, non-negative descending
  Matrix v;  // K x A, orthonormal columns
};

// Subtract per-column means. Requires N >= 2.
std::pair<Matrix, Vector> mean_center(const Matrix& x);

// Leading A factors of Xc = U S V^T. Sign convention: the largest-magnitude
// entry of each right singular vector is positive. Uses the eigendecomposition
// of the smaller Gram matrix (Xc^T Xc or Xc Xc^T) by cyclic Jacobi rotations.
TruncatedSvd svd_truncated(const Matrix& xc, std::size_t a);

PcaModel pca_fit(const Matrix& x, std::size_t a);

// X_hat = T P^T + means
Matrix pca_reconstruct(const PcaModel& model);

// Ordinary least squares through the normal equations. Rejects systems whose
// condition number exceeds 1e12.
Vector mlr_fit(const Matrix& x, std::span<const double> y);

// Per-component t_a.y / (t_a.t_a); valid because score columns are orthogonal.
Vector pcr_fit(const PcaModel& model, std::span<const double> y);

// theta_bar = P * theta_pcr, one coefficient per original column.
Vector backproject(const PcaModel& model, std::span<const double> theta_pcr);

struct SelectionResult {
  std::vector<std::size_t> ranked_indices;    // by |theta_bar| desc, ties by index
  std::vector<std::size_t> selected_indices;  // ascending original order
  double epsilon = 0.0;
  std::size_t selected_count = 0;
  PcaModel pca;
  Vector theta_pcr;
  Vector theta_bar;
};

// Ranking plus strict-threshold selection; pca/theta fields left empty.
SelectionResult select_features(std::span<const double> theta_bar, double epsilon);

Matrix build_selected_matrix(const Matrix& x, std::span<const std::size_t> indices);

// The 5-step procedure: center, PCA, PCR, back-projection, threshold.
SelectionResult select_pipeline(const Matrix& x, std::span<const double> y,
                                std::size_t a = 3, double epsilon = 0.02);

struct CorrelationLoadings {
  Matrix r;             // K x A Pearson correlations column vs score
  Vector cumulative_r2; // K, sum over components of r^2
  std::vector<uint8_t> zero_variance;  // flagged columns (r rows forced to 0)
};

CorrelationLoadings correlation_loadings(const Matrix& xc, const Matrix& scores);

// ---- exports ----

// rank,column_index,frequency_hz,theta_bar,selected
void export_selection_csv(const SelectionResult& sel, double frame_seconds,
                          const std::string& path);

// Compact binary column-index list: "UWSL", version u16, count u64, u64 indices.
void save_selected_indices(std::span<const std::size_t> indices,
                           const std::string& path);
std::vector<std::size_t> load_selected_indices(const std::string& path);

// column_index,frequency_hz,r_pc<a>,r_pc<b>,cum_r2 for a chosen PC pair
// (1-based in the file header, 0-based arguments). column_map translates row
// positions back to original spectrum columns when the loadings were computed
// on a selected matrix; empty means identity.
void export_loadings_csv(const CorrelationLoadings& cl, std::size_t pc_a,
                         std::size_t pc_b, double frame_seconds,
                         const std::string& path,
                         std::span<const std::size_t> column_map = {});

// Scatter of the PC pair with the r^2 = 0.5 and r^2 = 1.0 reference circles.
void export_loadings_svg(const CorrelationLoadings& cl, std::size_t pc_a,
                         std::size_t pc_b, const std::string& path);

}  // namespace uwloc::pca

#endif  // UWLOC_PCA_HPP
