#include "uwloc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uwloc::linalg {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::column(std::size_t j) const {
  Vector v(rows_);
  for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
  return v;
}

void Matrix::set_column(std::size_t j, std::span<const double> v) {
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::DimensionMismatch, "matmul: inner dimensions disagree");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    auto ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix gram(const Matrix& a) {
  const std::size_t k = a.cols();
  Matrix g(k, k);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t i = 0; i < k; ++i) {
      const double ri = row[i];
      if (ri == 0.0) continue;
      auto gi = g.row(i);
      for (std::size_t j = i; j < k; ++j) gi[j] += ri * row[j];
    }
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

Matrix outer_gram(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double d = dot(a.row(i), a.row(j));
      g(i, j) = d;
      g(j, i) = d;
    }
  }
  return g;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols())
    fail(ErrorCode::DimensionMismatch, "matvec: vector length != cols");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows())
    fail(ErrorCode::DimensionMismatch, "matvec_transposed: vector length != rows");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    auto av = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += xi * av[j];
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += dot(a.row(i), a.row(i));
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double v : a.row(i)) m = std::max(m, std::abs(v));
  return m;
}

namespace {

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen_sym(const Matrix& input, double tol, int max_sweeps) {
  if (input.rows() != input.cols())
    fail(ErrorCode::DimensionMismatch, "jacobi_eigen_sym: matrix not square");
  const std::size_t n = input.rows();
  Matrix a = input;
  Matrix q = Matrix::identity(n);

  const double scale = std::max(frobenius_norm(a), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diagonal_norm(a) <= tol * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (apr == 0.0) continue;
        const double app = a(p, p);
        const double arr = a(r, r);
        // rotation zeroing a(p,r); stable tangent formula
        const double theta = (arr - app) / (2.0 * apr);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p);
          const double qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Vector diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = diag[order[j]];
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = q(i, order[j]);
  }
  return out;
}

}  // namespace uwloc::linalg
