#include <doctest.h>

#include <random>

#include "test_helpers.hpp"
#include "uwloc/linalg.hpp"

using namespace uwloc;
using namespace uwloc::linalg;

TEST_CASE("matmul and transpose basics") {
  Matrix a(2, 3);
  a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
  a(1, 0) = 4; a(1, 1) = 5; a(1, 2) = 6;
  const Matrix at = transpose(a);
  CHECK(at.rows() == 3);
  CHECK(at(2, 1) == 6);

  const Matrix g = gram(a);  // a^T a
  const Matrix g2 = matmul(at, a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(g(i, j) == doctest::Approx(g2(i, j)).epsilon(1e-14));

  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("matvec against hand result") {
  Matrix a(2, 2);
  a(0, 0) = 2; a(0, 1) = 1;
  a(1, 0) = 0; a(1, 1) = 3;
  const std::vector<double> x{1.0, 2.0};
  const auto y = matvec(a, x);
  CHECK(y[0] == doctest::Approx(4.0));
  CHECK(y[1] == doctest::Approx(6.0));
  const auto yt = matvec_transposed(a, x);
  CHECK(yt[0] == doctest::Approx(2.0));
  CHECK(yt[1] == doctest::Approx(7.0));
}

TEST_CASE("jacobi eigendecomposition of a known 2x2") {
  // eigenvalues of [[2,1],[1,2]] are 3 and 1
  Matrix s(2, 2);
  s(0, 0) = 2; s(0, 1) = 1;
  s(1, 0) = 1; s(1, 1) = 2;
  const auto eig = jacobi_eigen_sym(s);
  CHECK(eig.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(eig.values[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jacobi reconstructs random symmetric matrices") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 9;
    Matrix s(n, n);
    {
      const Matrix half = test::random_matrix(n, n, rng);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          s(i, j) = 0.5 * (half(i, j) + half(j, i));
    }
    const auto eig = jacobi_eigen_sym(s);

    // Q diag Q^T == S
    Matrix reconstructed(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c)
          acc += eig.vectors(i, c) * eig.values[c] * eig.vectors(j, c);
        reconstructed(i, j) = acc;
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(reconstructed(i, j) == doctest::Approx(s(i, j)).epsilon(1e-10));

    // orthonormal eigenvectors, descending values
    const Matrix qtq = gram(eig.vectors);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(std::abs(qtq(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);
    for (std::size_t c = 1; c < n; ++c)
      CHECK(eig.values[c - 1] >= eig.values[c] - 1e-12);
  }
}

TEST_CASE("jacobi rejects non-square input") {
  CHECK_THROWS_AS(jacobi_eigen_sym(Matrix(2, 3)), Error);
}
