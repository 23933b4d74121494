#include <doctest.h>

#include <cmath>
#include <random>

#include "test_helpers.hpp"
#include "uwloc/pca.hpp"
#include "uwloc/synth.hpp"

using namespace uwloc;
using namespace uwloc::pca;

namespace {

// random orthonormal K x A basis by Gram-Schmidt, for the Eckart-Young check
linalg::Matrix random_orthonormal(std::size_t k, std::size_t a,
                                  std::mt19937_64& rng) {
  linalg::Matrix q = test::random_matrix(k, a, rng);
  for (std::size_t c = 0; c < a; ++c) {
    auto col = q.column(c);
    for (std::size_t prev = 0; prev < c; ++prev) {
      const auto p = q.column(prev);
      const double proj = linalg::dot(col, p);
      for (std::size_t i = 0; i < k; ++i) col[i] -= proj * p[i];
    }
    const double norm = linalg::norm2(col);
    for (std::size_t i = 0; i < k; ++i) col[i] /= norm;
    q.set_column(c, col);
  }
  return q;
}

}  // namespace

TEST_CASE("mean_center two-row arithmetic and idempotence") {
  linalg::Matrix x(2, 2);
  x(0, 0) = 1; x(0, 1) = 2;
  x(1, 0) = 3; x(1, 1) = 4;
  auto [xc, means] = mean_center(x);
  CHECK(means[0] == doctest::Approx(2.0));
  CHECK(means[1] == doctest::Approx(3.0));
  CHECK(xc(0, 0) == doctest::Approx(-1.0));
  CHECK(xc(0, 1) == doctest::Approx(-1.0));
  CHECK(xc(1, 0) == doctest::Approx(1.0));
  CHECK(xc(1, 1) == doctest::Approx(1.0));

  auto [xcc, means2] = mean_center(xc);
  CHECK(means2[0] == doctest::Approx(0.0));
  CHECK(xcc == xc);

  CHECK_THROWS_AS(mean_center(linalg::Matrix(1, 3)), Error);
}

TEST_CASE("mean_center column sums vanish on random input") {
  std::mt19937_64 rng(5);
  const auto x = test::random_matrix(50, 10, rng);
  auto [xc, means] = mean_center(x);
  for (std::size_t j = 0; j < 10; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 50; ++i) sum += xc(i, j);
    CHECK(std::abs(sum) < 1e-10 * 50);
  }
}

TEST_CASE("svd_truncated rank-1 symmetric case") {
  linalg::Matrix xc(2, 2);
  xc(0, 0) = 1; xc(0, 1) = -1;
  xc(1, 0) = -1; xc(1, 1) = 1;
  const auto f = svd_truncated(xc, 1);
  CHECK(f.s[0] == doctest::Approx(2.0).epsilon(1e-12));
  // T = U S = [sqrt(2), -sqrt(2)] up to a global sign
  const double t0 = f.u(0, 0) * f.s[0];
  const double t1 = f.u(1, 0) * f.s[0];
  CHECK(std::abs(t0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(t0 == doctest::Approx(-t1).epsilon(1e-12));
  CHECK(std::abs(f.v(0, 0)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("svd_truncated of a diagonal matrix") {
  linalg::Matrix xc(3, 3);
  xc(0, 0) = 3; xc(1, 1) = 2; xc(2, 2) = 1;
  const auto f = svd_truncated(xc, 2);
  CHECK(f.s[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.s[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("svd_truncated component-count validation") {
  const linalg::Matrix xc(4, 3);
  CHECK_THROWS_AS(svd_truncated(xc, 0), Error);
  CHECK_THROWS_AS(svd_truncated(xc, 4), Error);
}

TEST_CASE("svd_truncated agrees with the reference decomposition") {
  std::mt19937_64 rng(19);
  const auto x = test::random_matrix(40, 12, rng);
  auto [xc, means] = mean_center(x);
  const auto f = svd_truncated(xc, 5);
  const auto ref = synth::reference_svd(xc);
  for (std::size_t c = 0; c < 5; ++c)
    CHECK(f.s[c] == doctest::Approx(ref.s[c]).epsilon(1e-8));

  // identical subspaces within 1e-6 principal angles
  linalg::Matrix ref_v5(12, 5);
  for (std::size_t j = 0; j < 12; ++j)
    for (std::size_t c = 0; c < 5; ++c) ref_v5(j, c) = ref.v(j, c);
  CHECK(test::max_principal_angle(f.v, ref_v5) < 1e-6);

  // factorization identities: Xc V = U S, orthonormal factors
  for (std::size_t c = 0; c < 5; ++c) {
    const auto xv = linalg::matvec(xc, f.v.column(c));
    for (std::size_t i = 0; i < xc.rows(); ++i)
      CHECK(xv[i] == doctest::Approx(f.u(i, c) * f.s[c]).epsilon(1e-8));
  }
  const auto utu = linalg::gram(f.u);
  const auto vtv = linalg::gram(f.v);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(utu(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
      CHECK(std::abs(vtv(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
    }
}

TEST_CASE("svd_truncated wide-matrix path matches the reference too") {
  std::mt19937_64 rng(23);
  const auto x = test::random_matrix(9, 17, rng);  // N < K
  auto [xc, means] = mean_center(x);
  const auto f = svd_truncated(xc, 4);
  const auto ref = synth::reference_svd(xc);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(f.s[c] == doctest::Approx(ref.s[c]).epsilon(1e-8));
}

TEST_CASE("pca_fit full-rank reconstruction and variance ordering") {
  std::mt19937_64 rng(31);
  const auto x = test::random_matrix(20, 6, rng);
  const auto model = pca_fit(x, 6);
  const auto xhat = pca_reconstruct(model);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      num += (x(i, j) - xhat(i, j)) * (x(i, j) - xhat(i, j));
      den += x(i, j) * x(i, j);
    }
  CHECK(std::sqrt(num) < 1e-8 * std::sqrt(den));

  // score variances non-increasing
  for (std::size_t c = 1; c < 6; ++c) {
    const auto a = model.scores.column(c - 1);
    const auto b = model.scores.column(c);
    CHECK(linalg::dot(a, a) >= linalg::dot(b, b) - 1e-10);
  }
  // explained variance ratios in [0,1], non-increasing, summing to ~1 at full rank
  double total = 0.0;
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(model.explained_variance_ratio[c] >= 0.0);
    CHECK(model.explained_variance_ratio[c] <= 1.0);
    if (c) CHECK(model.explained_variance_ratio[c - 1] >=
                 model.explained_variance_ratio[c] - 1e-12);
    total += model.explained_variance_ratio[c];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("pca_fit on near-linear data explains almost everything with one PC") {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> tiny(0.0, 1e-3);
  linalg::Matrix x(60, 4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < 60; ++i) {
    const double t = u(rng);
    const double direction[4] = {0.5, -1.0, 2.0, 0.25};
    for (std::size_t j = 0; j < 4; ++j) x(i, j) = t * direction[j] + tiny(rng);
  }
  const auto model = pca_fit(x, 1);
  CHECK(model.explained_variance_ratio[0] > 0.99);
}

TEST_CASE("pca loadings orthonormal after every fit (property)") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 10 + rng() % 30;
    const std::size_t k = 2 + rng() % 8;
    const std::size_t a = 1 + rng() % std::min(n - 1, k);
    const auto model = pca_fit(test::random_matrix(n, k, rng), a);
    const auto ptp = linalg::gram(model.loadings);
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < a; ++j)
        CHECK(std::abs(ptp(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
  }
}

TEST_CASE("Eckart-Young: PCA beats 100 random rank-A subspaces") {
  std::mt19937_64 rng(43);
  const auto x = test::random_matrix(30, 8, rng);
  const std::size_t a = 3;
  const auto model = pca_fit(x, a);
  auto [xc, means] = mean_center(x);
  const auto p_t = linalg::transpose(model.loadings);
  const auto best = linalg::matmul(model.scores, p_t);
  double best_err = 0.0;
  for (std::size_t i = 0; i < xc.rows(); ++i)
    for (std::size_t j = 0; j < xc.cols(); ++j)
      best_err += (xc(i, j) - best(i, j)) * (xc(i, j) - best(i, j));

  for (int trial = 0; trial < 100; ++trial) {
    const auto q = random_orthonormal(8, a, rng);
    const auto proj = linalg::matmul(linalg::matmul(xc, q), linalg::transpose(q));
    double err = 0.0;
    for (std::size_t i = 0; i < xc.rows(); ++i)
      for (std::size_t j = 0; j < xc.cols(); ++j)
        err += (xc(i, j) - proj(i, j)) * (xc(i, j) - proj(i, j));
    CHECK(best_err <= err + 1e-10);
  }
}

TEST_CASE("mlr_fit hand oracles and singular detection") {
  {
    linalg::Matrix x(3, 1);
    x(0, 0) = 1; x(1, 0) = 2; x(2, 0) = 3;
    const std::vector<double> y{2, 4, 6};
    const auto theta = mlr_fit(x, y);
    CHECK(theta[0] == doctest::Approx(2.0).epsilon(1e-12));
  }
  {
    // normal equations by hand: X^T X = [[2,1],[1,2]], X^T y = [4,5] -> theta=[1,2]
    linalg::Matrix x(3, 2);
    x(0, 0) = 1; x(0, 1) = 0;
    x(1, 0) = 0; x(1, 1) = 1;
    x(2, 0) = -1; x(2, 1) = -1;
    const std::vector<double> y{1, 2, -3};
    const auto theta = mlr_fit(x, y);
    CHECK(theta[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(theta[1] == doctest::Approx(2.0).epsilon(1e-10));

    // residual orthogonal to the columns
    const auto fitted = linalg::matvec(x, theta);
    std::vector<double> residual(3);
    for (std::size_t i = 0; i < 3; ++i) residual[i] = y[i] - fitted[i];
    const auto xtr = linalg::matvec_transposed(x, residual);
    for (double v : xtr) CHECK(std::abs(v) < 1e-8);
  }
  {
    linalg::Matrix x(4, 2);  // duplicated column
    for (std::size_t i = 0; i < 4; ++i) x(i, 0) = x(i, 1) = double(i + 1);
    const std::vector<double> y{1, 2, 3, 4};
    CHECK_THROWS_AS(mlr_fit(x, y), Error);
  }
}

TEST_CASE("pcr_fit projection identities") {
  std::mt19937_64 rng(47);
  const auto x = test::random_matrix(25, 6, rng);
  const auto model = pca_fit(x, 4);

  // y equal to the first score column -> theta = e_0
  const auto y0 = model.scores.column(0);
  const auto theta0 = pcr_fit(model, y0);
  CHECK(theta0[0] == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t c = 1; c < 4; ++c) CHECK(std::abs(theta0[c]) < 1e-10);

  // y orthogonal to all score columns -> theta = 0
  std::vector<double> y_perp(25);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : y_perp) v = u(rng);
  for (std::size_t c = 0; c < 4; ++c) {
    const auto t = model.scores.column(c);
    const double coeff = linalg::dot(y_perp, t) / linalg::dot(t, t);
    for (std::size_t i = 0; i < 25; ++i) y_perp[i] -= coeff * t[i];
  }
  for (double v : pcr_fit(model, y_perp)) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("full-rank PCR equals MLR through back-projection (property)") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng() % 51;
    const std::size_t k = 2 + rng() % 11;
    const auto x = test::random_matrix(n, k, rng);
    const auto y = test::random_vector(n, rng);
    auto [xc, means] = mean_center(x);

    const auto model = pca_fit(x, k);
    const auto theta_bar = backproject(model, pcr_fit(model, y));
    const auto theta_mlr = mlr_fit(xc, y);
    double scale = 0.0;
    for (double v : theta_mlr) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < k; ++j)
      CHECK(std::abs(theta_bar[j] - theta_mlr[j]) <= 1e-8 * std::max(scale, 1.0));
  }
}

TEST_CASE("backproject linearity and identity loadings") {
  std::mt19937_64 rng(59);
  const auto model = pca_fit(test::random_matrix(12, 4, rng), 3);
  const std::vector<double> zero(3, 0.0);
  for (double v : backproject(model, zero)) CHECK(v == 0.0);
  const std::vector<double> bad(2, 1.0);
  CHECK_THROWS_AS(backproject(model, bad), Error);

  PcaModel identity_model;
  identity_model.n_components = 3;
  identity_model.loadings = linalg::Matrix::identity(3);
  const std::vector<double> theta{0.3, -0.7, 0.1};
  const auto bar = backproject(identity_model, theta);
  for (std::size_t i = 0; i < 3; ++i) CHECK(bar[i] == doctest::Approx(theta[i]));
}

TEST_CASE("select_features threshold arithmetic") {
  const std::vector<double> theta{0.5, -0.01, 0.03, -0.02};
  const auto sel = select_features(theta, 0.02);
  REQUIRE(sel.selected_indices.size() == 2);  // strict: |-0.02| excluded
  CHECK(sel.selected_indices[0] == 0);
  CHECK(sel.selected_indices[1] == 2);
  CHECK(sel.ranked_indices[0] == 0);
  CHECK(sel.ranked_indices[1] == 2);
  CHECK(sel.selected_count == 2);

  const auto all = select_features(theta, 0.0);
  CHECK(all.selected_indices.size() == 4);

  CHECK_THROWS_AS(select_features(theta, 0.6), Error);
}

TEST_CASE("select_features tie-breaking by ascending index") {
  const std::vector<double> theta{-0.5, 0.5, 0.25};
  const auto sel = select_features(theta, 0.1);
  CHECK(sel.ranked_indices[0] == 0);
  CHECK(sel.ranked_indices[1] == 1);
  CHECK(sel.ranked_indices[2] == 2);
}

TEST_CASE("selection monotonicity in epsilon (property)") {
  std::mt19937_64 rng(61);
  const auto theta = test::random_vector(40, rng);
  std::vector<std::size_t> previous;
  bool first = true;
  for (double eps = 0.0; eps < 0.9; eps += 0.07) {
    std::vector<std::size_t> current;
    try {
      current = select_features(theta, eps).selected_indices;
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::EmptySelection);
      break;
    }
    if (!first)
      for (std::size_t j : current)
        CHECK(std::find(previous.begin(), previous.end(), j) != previous.end());
    previous = current;
    first = false;
  }
}

TEST_CASE("build_selected_matrix column extraction") {
  std::mt19937_64 rng(67);
  const auto x = test::random_matrix(6, 3, rng);
  std::vector<std::size_t> all{0, 1, 2};
  CHECK(build_selected_matrix(x, all) == x);

  std::vector<std::size_t> first{0};
  const auto xbar = build_selected_matrix(x, first);
  CHECK(xbar.cols() == 1);
  for (std::size_t i = 0; i < 6; ++i) CHECK(xbar(i, 0) == x(i, 0));

  std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(build_selected_matrix(x, bad), Error);
}

TEST_CASE("select_pipeline ranking invariance under label scaling") {
  std::mt19937_64 rng(71);
  const auto x = test::random_matrix(30, 10, rng, 0.0, 1.0);
  auto y = test::random_vector(30, rng, 0.0, 1.0);
  const auto sel = select_pipeline(x, y, 3, 0.0);

  auto y2 = y;
  for (double& v : y2) v *= 3.5;
  const auto sel2 = select_pipeline(x, y2, 3, 0.0);
  CHECK(sel.ranked_indices == sel2.ranked_indices);
  for (std::size_t j = 0; j < 10; ++j)
    CHECK(sel2.theta_bar[j] == doctest::Approx(3.5 * sel.theta_bar[j]).epsilon(1e-9));
}

TEST_CASE("select_pipeline sign invariance under component flips") {
  std::mt19937_64 rng(73);
  const auto x = test::random_matrix(24, 7, rng, 0.0, 1.0);
  const auto y = test::random_vector(24, rng, 0.0, 1.0);
  const auto sel = select_pipeline(x, y, 3, 0.0);

  // flipping a component's scores and loadings together keeps theta_bar
  PcaModel flipped = sel.pca;
  for (std::size_t i = 0; i < flipped.scores.rows(); ++i)
    flipped.scores(i, 1) = -flipped.scores(i, 1);
  for (std::size_t j = 0; j < flipped.loadings.rows(); ++j)
    flipped.loadings(j, 1) = -flipped.loadings(j, 1);
  const auto theta_flipped = backproject(flipped, pcr_fit(flipped, y));
  for (std::size_t j = 0; j < 7; ++j)
    CHECK(theta_flipped[j] == doctest::Approx(sel.theta_bar[j]).epsilon(1e-10));
}

TEST_CASE("select_pipeline rejects constant labels with EmptySelection") {
  std::mt19937_64 rng(79);
  const auto x = test::random_matrix(20, 5, rng, 0.0, 1.0);
  const std::vector<double> y(20, 0.4);
  try {
    select_pipeline(x, y, 3, 0.02);
    FAIL("expected EmptySelection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySelection);
  }
}

TEST_CASE("select_pipeline defaults are A=3, epsilon=0.02") {
  std::mt19937_64 rng(83);
  linalg::Matrix x = test::random_matrix(40, 6, rng, 0.0, 1.0);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = x(i, 2);  // one strongly informative column
  }
  const auto sel = select_pipeline(x, y);
  CHECK(sel.pca.n_components == 3);
  CHECK(sel.epsilon == 0.02);
}

TEST_CASE("correlation loadings identities") {
  std::mt19937_64 rng(89);
  auto x = test::random_matrix(40, 5, rng);
  const auto model = pca_fit(x, 3);
  auto [xc, means] = mean_center(x);

  // a column equal to the first score has r = (1, 0, 0)
  linalg::Matrix augmented(40, 6);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 5; ++j) augmented(i, j) = xc(i, j);
    augmented(i, 5) = model.scores(i, 0);
  }
  const auto cl = correlation_loadings(augmented, model.scores);
  CHECK(cl.r(5, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(cl.r(5, 1)) < 1e-10);
  CHECK(std::abs(cl.r(5, 2)) < 1e-10);

  // every point inside the unit circle for any PC pair, cum_r2 in [0,1]
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b)
        CHECK(cl.r(j, a) * cl.r(j, a) + cl.r(j, b) * cl.r(j, b) <= 1.0 + 1e-10);
    CHECK(cl.cumulative_r2[j] <= 1.0 + 1e-9);
    CHECK(cl.cumulative_r2[j] >= 0.0);
  }
}

TEST_CASE("correlation loadings: noise orthogonal to scores stays near origin") {
  std::mt19937_64 rng(97);
  auto x = test::random_matrix(50, 4, rng);
  const auto model = pca_fit(x, 2);
  auto [xc, means] = mean_center(x);

  // build a column orthogonal to both score columns
  auto noise = test::random_vector(50, rng);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto t = model.scores.column(c);
    const double coeff = linalg::dot(noise, t) / linalg::dot(t, t);
    for (std::size_t i = 0; i < 50; ++i) noise[i] -= coeff * t[i];
  }
  linalg::Matrix augmented(50, 5);
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t j = 0; j < 4; ++j) augmented(i, j) = xc(i, j);
    augmented(i, 4) = noise[i];
  }
  const auto cl = correlation_loadings(augmented, model.scores);
  CHECK(std::abs(cl.r(4, 0)) < 1e-8);
  CHECK(std::abs(cl.r(4, 1)) < 1e-8);

  // zero-variance column flagged, not fatal
  linalg::Matrix with_const(50, 2);
  for (std::size_t i = 0; i < 50; ++i) {
    with_const(i, 0) = xc(i, 0);
    with_const(i, 1) = 0.0;
  }
  const auto cl2 = correlation_loadings(with_const, model.scores);
  CHECK(cl2.zero_variance[1] == 1);
  CHECK(cl2.r(1, 0) == 0.0);
}
