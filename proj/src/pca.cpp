#include "uwloc/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "io_util.hpp"

namespace uwloc::pca {

using detail::format_double;

std::pair<Matrix, Vector> mean_center(const Matrix& x) {
  if (x.rows() < 2)
    fail(ErrorCode::TooFewRows, "mean centering needs at least 2 rows, got " +
                                    std::to_string(x.rows()));
  const std::size_t n = x.rows(), k = x.cols();
  Vector means(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    for (std::size_t j = 0; j < k; ++j) means[j] += row[j];
  }
  for (double& m : means) m /= static_cast<double>(n);
  Matrix xc(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) xc(i, j) = x(i, j) - means[j];
  return {std::move(xc), std::move(means)};
}

namespace {

// Largest-magnitude entry of each right singular vector made positive,
// flipping the paired left vector to keep the product unchanged.
void fix_signs(TruncatedSvd& f) {
  for (std::size_t a = 0; a < f.s.size(); ++a) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t j = 0; j < f.v.rows(); ++j) {
      const double mag = std::abs(f.v(j, a));
      if (mag > best) {
        best = mag;
        arg = j;
      }
    }
    if (f.v(arg, a) < 0.0) {
      for (std::size_t j = 0; j < f.v.rows(); ++j) f.v(j, a) = -f.v(j, a);
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, a) = -f.u(i, a);
    }
  }
}

}  // namespace

TruncatedSvd svd_truncated(const Matrix& xc, std::size_t a) {
  const std::size_t n = xc.rows(), k = xc.cols();
  if (a < 1 || a > std::min(n, k))
    fail(ErrorCode::InvalidComponentCount,
         "need 1 <= A <= min(N,K); got A=" + std::to_string(a) + " for " +
             std::to_string(n) + "x" + std::to_string(k));

  TruncatedSvd f;
  f.u = Matrix(n, a);
  f.v = Matrix(k, a);
  f.s.assign(a, 0.0);

  if (k <= n) {
    const auto eig = linalg::jacobi_eigen_sym(linalg::gram(xc));
    for (std::size_t c = 0; c < a; ++c) {
      const double s = std::sqrt(std::max(eig.values[c], 0.0));
      f.s[c] = s;
      for (std::size_t j = 0; j < k; ++j) f.v(j, c) = eig.vectors(j, c);
      if (s > 0.0) {
        const auto t = linalg::matvec(xc, f.v.column(c));
        for (std::size_t i = 0; i < n; ++i) f.u(i, c) = t[i] / s;
      }
    }
  } else {
    const auto eig = linalg::jacobi_eigen_sym(linalg::outer_gram(xc));
    for (std::size_t c = 0; c < a; ++c) {
      const double s = std::sqrt(std::max(eig.values[c], 0.0));
      f.s[c] = s;
      for (std::size_t i = 0; i < n; ++i) f.u(i, c) = eig.vectors(i, c);
      if (s > 0.0) {
        const auto v = linalg::matvec_transposed(xc, f.u.column(c));
        for (std::size_t j = 0; j < k; ++j) f.v(j, c) = v[j] / s;
      }
    }
  }
  fix_signs(f);
  return f;
}

PcaModel pca_fit(const Matrix& x, std::size_t a) {
  auto [xc, means] = mean_center(x);
  auto f = svd_truncated(xc, a);

  PcaModel model;
  model.column_means = std::move(means);
  model.n_components = a;
  model.singular_values = f.s;
  model.loadings = std::move(f.v);
  model.scores = Matrix(x.rows(), a);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < a; ++c) model.scores(i, c) = f.u(i, c) * f.s[c];

  const double total = linalg::frobenius_norm(xc);
  model.total_variance = total * total;
  model.explained_variance_ratio.assign(a, 0.0);
  if (model.total_variance > 0.0)
    for (std::size_t c = 0; c < a; ++c)
      model.explained_variance_ratio[c] = f.s[c] * f.s[c] / model.total_variance;
  return model;
}

Matrix pca_reconstruct(const PcaModel& model) {
  Matrix xhat = linalg::matmul(model.scores, linalg::transpose(model.loadings));
  for (std::size_t i = 0; i < xhat.rows(); ++i)
    for (std::size_t j = 0; j < xhat.cols(); ++j)
      xhat(i, j) += model.column_means[j];
  return xhat;
}

Vector mlr_fit(const Matrix& x, std::span<const double> y) {
  if (y.size() != x.rows())
    fail(ErrorCode::DimensionMismatch, "mlr_fit: label length != rows");
  const auto g = linalg::gram(x);
  const auto eig = linalg::jacobi_eigen_sym(g);
  const double lmax = eig.values.front();
  const double lmin = eig.values.back();
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    fail(ErrorCode::SingularNormalEquations,
         "X^T X condition number exceeds 1e12 (or matrix is singular)");
  const auto xty = linalg::matvec_transposed(x, y);
  const auto proj = linalg::matvec_transposed(eig.vectors, xty);  // V^T X^T y
  Vector scaled(proj.size());
  for (std::size_t c = 0; c < proj.size(); ++c) scaled[c] = proj[c] / eig.values[c];
  return linalg::matvec(eig.vectors, scaled);
}

Vector pcr_fit(const PcaModel& model, std::span<const double> y) {
  if (y.size() != model.scores.rows())
    fail(ErrorCode::DimensionMismatch, "pcr_fit: label length != score rows");
  const double s_max = model.singular_values.empty() ? 0.0 : model.singular_values[0];
  Vector theta(model.n_components, 0.0);
  for (std::size_t c = 0; c < model.n_components; ++c) {
    if (model.singular_values[c] <= 1e-12 * std::max(s_max, 1e-300))
      fail(ErrorCode::ZeroVarianceComponent,
           "score column " + std::to_string(c) + " has zero variance");
    const auto t = model.scores.column(c);
    theta[c] = linalg::dot(t, y) / linalg::dot(t, t);
  }
  return theta;
}

Vector backproject(const PcaModel& model, std::span<const double> theta_pcr) {
  if (theta_pcr.size() != model.n_components)
    fail(ErrorCode::DimensionMismatch,
         "backproject: coefficient count != component count");
  return linalg::matvec(model.loadings, theta_pcr);
}

SelectionResult select_features(std::span<const double> theta_bar, double epsilon) {
  if (epsilon < 0.0)
    fail(ErrorCode::ConfigError, "selection threshold must be non-negative");
  SelectionResult result;
  result.epsilon = epsilon;
  result.theta_bar.assign(theta_bar.begin(), theta_bar.end());

  result.ranked_indices.resize(theta_bar.size());
  std::iota(result.ranked_indices.begin(), result.ranked_indices.end(), 0);
  std::stable_sort(result.ranked_indices.begin(), result.ranked_indices.end(),
                   [&](std::size_t i, std::size_t j) {
                     return std::abs(theta_bar[i]) > std::abs(theta_bar[j]);
                   });

  for (std::size_t j = 0; j < theta_bar.size(); ++j)
    if (std::abs(theta_bar[j]) > epsilon) result.selected_indices.push_back(j);
  result.selected_count = result.selected_indices.size();
  if (result.selected_indices.empty())
    fail(ErrorCode::EmptySelection,
         "no coefficient magnitude exceeds epsilon=" + format_double(epsilon));
  return result;
}

Matrix build_selected_matrix(const Matrix& x, std::span<const std::size_t> indices) {
  for (std::size_t j : indices)
    if (j >= x.cols())
      fail(ErrorCode::IndexOutOfRange, "selected column " + std::to_string(j) +
                                           " out of range for K=" +
                                           std::to_string(x.cols()));
  Matrix out(x.rows(), indices.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    for (std::size_t c = 0; c < indices.size(); ++c) dst[c] = src[indices[c]];
  }
  return out;
}

SelectionResult select_pipeline(const Matrix& x, std::span<const double> y,
                                std::size_t a, double epsilon) {
  if (y.size() != x.rows())
    fail(ErrorCode::DimensionMismatch, "select_pipeline: label length != rows");
  if (x.rows() <= a)
    fail(ErrorCode::InvalidComponentCount,
         "select_pipeline needs N > A; got N=" + std::to_string(x.rows()) +
             ", A=" + std::to_string(a));

  PcaModel model = pca_fit(x, a);
  const Vector theta_pcr = pcr_fit(model, y);
  const Vector theta_bar = backproject(model, theta_pcr);

  SelectionResult result;
  try {
    result = select_features(theta_bar, epsilon);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptySelection) throw;
    fail(ErrorCode::EmptySelection,
         std::string(e.what()) +
             "; lower the threshold or verify that the labels vary across rows");
  }
  result.pca = std::move(model);
  result.theta_pcr = theta_pcr;
  return result;
}

CorrelationLoadings correlation_loadings(const Matrix& xc, const Matrix& scores) {
  if (xc.rows() != scores.rows())
    fail(ErrorCode::DimensionMismatch, "correlation_loadings: row counts differ");
  const std::size_t n = xc.rows(), k = xc.cols(), a = scores.cols();

  // Centered score columns and their norms; a constant score column makes
  // every correlation against it undefined.
  Matrix tc(n, a);
  Vector t_norm(a);
  for (std::size_t c = 0; c < a; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += scores(i, c);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      tc(i, c) = scores(i, c) - mean;
      ss += tc(i, c) * tc(i, c);
    }
    if (ss <= 0.0)
      fail(ErrorCode::ZeroVarianceComponent,
           "score column " + std::to_string(c) + " is constant");
    t_norm[c] = std::sqrt(ss);
  }

  CorrelationLoadings cl;
  cl.r = Matrix(k, a);
  cl.cumulative_r2.assign(k, 0.0);
  cl.zero_variance.assign(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xc(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    Vector col(n);
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = xc(i, j) - mean;
      ss += col[i] * col[i];
    }
    if (ss <= 0.0) {
      cl.zero_variance[j] = 1;
      continue;
    }
    const double x_norm = std::sqrt(ss);
    for (std::size_t c = 0; c < a; ++c) {
      const double r = linalg::dot(col, tc.column(c)) / (x_norm * t_norm[c]);
      cl.r(j, c) = r;
      cl.cumulative_r2[j] += r * r;
    }
  }
  return cl;
}

// ---- exports ----

void export_selection_csv(const SelectionResult& sel, double frame_seconds,
                          const std::string& path) {
  auto out = detail::open_out(path);
  std::vector<uint8_t> is_selected(sel.theta_bar.size(), 0);
  for (std::size_t j : sel.selected_indices) is_selected[j] = 1;
  out << "rank,column_index,frequency_hz,theta_bar,selected\n";
  for (std::size_t rank = 0; rank < sel.ranked_indices.size(); ++rank) {
    const std::size_t j = sel.ranked_indices[rank];
    out << (rank + 1) << ',' << j << ','
        << format_double(static_cast<double>(j + 1) / frame_seconds) << ','
        << format_double(sel.theta_bar[j]) << ',' << int(is_selected[j]) << "\n";
  }
}

namespace {
constexpr char kIndexMagic[4] = {'U', 'W', 'S', 'L'};
constexpr uint16_t kIndexVersion = 1;
}  // namespace

void save_selected_indices(std::span<const std::size_t> indices,
                           const std::string& path) {
  auto out = detail::open_out(path, true);
  out.write(kIndexMagic, 4);
  detail::write_pod(out, kIndexVersion);
  detail::write_pod(out, static_cast<uint64_t>(indices.size()));
  for (std::size_t j : indices) detail::write_pod(out, static_cast<uint64_t>(j));
}

std::vector<std::size_t> load_selected_indices(const std::string& path) {
  auto in = detail::open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kIndexMagic, 4) != 0)
    fail(ErrorCode::IoError, "not a selected-index file: " + path);
  const auto version = detail::read_pod<uint16_t>(in, "version");
  if (version != kIndexVersion)
    fail(ErrorCode::IoError, "unsupported index list version");
  const auto count = detail::read_pod<uint64_t>(in, "count");
  std::vector<std::size_t> indices(count);
  for (uint64_t i = 0; i < count; ++i)
    indices[i] = static_cast<std::size_t>(detail::read_pod<uint64_t>(in, "index"));
  return indices;
}

void export_loadings_csv(const CorrelationLoadings& cl, std::size_t pc_a,
                         std::size_t pc_b, double frame_seconds,
                         const std::string& path,
                         std::span<const std::size_t> column_map) {
  if (pc_a >= cl.r.cols() || pc_b >= cl.r.cols())
    fail(ErrorCode::IndexOutOfRange, "requested PC pair beyond fitted components");
  if (!column_map.empty() && column_map.size() != cl.r.rows())
    fail(ErrorCode::DimensionMismatch, "column map length != loading rows");
  auto out = detail::open_out(path);
  out << "column_index,frequency_hz,r_pc" << (pc_a + 1) << ",r_pc" << (pc_b + 1)
      << ",cum_r2\n";
  for (std::size_t j = 0; j < cl.r.rows(); ++j) {
    const std::size_t column = column_map.empty() ? j : column_map[j];
    out << column << ','
        << format_double(static_cast<double>(column + 1) / frame_seconds) << ','
        << format_double(cl.r(j, pc_a)) << ',' << format_double(cl.r(j, pc_b))
        << ',' << format_double(cl.cumulative_r2[j]) << "\n";
  }
}

void export_loadings_svg(const CorrelationLoadings& cl, std::size_t pc_a,
                         std::size_t pc_b, const std::string& path) {
  if (pc_a >= cl.r.cols() || pc_b >= cl.r.cols())
    fail(ErrorCode::IndexOutOfRange, "requested PC pair beyond fitted components");
  auto out = detail::open_out(path);
  const double half = 300.0, radius = 250.0;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" "
         "viewBox=\"0 0 600 600\">\n";
  out << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  out << "<line x1=\"0\" y1=\"300\" x2=\"600\" y2=\"300\" stroke=\"#cccccc\"/>\n";
  out << "<line x1=\"300\" y1=\"0\" x2=\"300\" y2=\"600\" stroke=\"#cccccc\"/>\n";
  // 100% and 50% explained-variance rings
  out << "<circle cx=\"300\" cy=\"300\" r=\"" << radius
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<circle cx=\"300\" cy=\"300\" r=\"" << radius * std::sqrt(0.5)
      << "\" fill=\"none\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n";
  for (std::size_t j = 0; j < cl.r.rows(); ++j) {
    const double x = half + cl.r(j, pc_a) * radius;
    const double y = half - cl.r(j, pc_b) * radius;
    out << "<circle cx=\"" << format_double(x) << "\" cy=\"" << format_double(y)
        << "\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
  }
  out << "<text x=\"560\" y=\"292\" font-size=\"14\">PC" << (pc_a + 1)
      << "</text>\n";
  out << "<text x=\"308\" y=\"18\" font-size=\"14\">PC" << (pc_b + 1)
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace uwloc::pca
