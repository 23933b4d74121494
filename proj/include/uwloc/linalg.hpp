#ifndef UWLOC_LINALG_HPP
#define UWLOC_LINALG_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "uwloc/common.hpp"

namespace uwloc::linalg {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. All pipeline math is 64-bit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> v);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * a without forming the transpose
Matrix gram(const Matrix& a);
// a * a^T
Matrix outer_gram(const Matrix& a);
Vector matvec(const Matrix& a, std::span<const double> x);
// a^T * x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // columns are eigenvectors, Q^T A Q = diag(values)
};

// Cyclic Jacobi rotations on a symmetric matrix. Deterministic sweep order;
// converges to off-diagonal Frobenius norm <= tol * ||A||_F.
SymmetricEigen jacobi_eigen_sym(const Matrix& a, double tol = 1e-14,
                                int max_sweeps = 64);

}  // namespace uwloc::linalg

#endif  // UWLOC_LINALG_HPP
