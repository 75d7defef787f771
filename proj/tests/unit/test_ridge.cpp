#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "helpers.hpp"
#include "neuroalign/ridge.hpp"
#include "neuroalign/stats.hpp"

using namespace neuroalign;
using namespace neuroalign::encoding;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Refit with one row held out, intercept unpenalized, via the normal equations.
double brute_loo_error(const MatrixXd& x, const VectorXd& y, double lambda) {
  const auto n = x.rows(), d = x.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    MatrixXd xt(n - 1, d);
    VectorXd yt(n - 1);
    for (Eigen::Index r = 0, k = 0; r < n; ++r) {
      if (r == i) continue;
      xt.row(k) = x.row(r);
      yt[k++] = y[r];
    }
    const Eigen::RowVectorXd mx = xt.colwise().mean();
    const double my = yt.mean();
    const MatrixXd xc = xt.rowwise() - mx;
    const VectorXd w = (xc.transpose() * xc + lambda * MatrixXd::Identity(d, d)).ldlt().solve(xc.transpose() * (yt.array() - my).matrix());
    const double pred = my + (x.row(i) - mx).dot(w);
    total += (y[i] - pred) * (y[i] - pred);
  }
  return total / static_cast<double>(n);
}

} // namespace

TEST_SUITE("ridge") {

TEST_CASE("default grid") {
  const auto g = default_lambda_grid();
  REQUIRE(g.size() == 13);
  CHECK(g.front() == doctest::Approx(1e-2));
  CHECK(g.back() == doctest::Approx(1e4));
  CHECK(g[2] == doctest::Approx(1e-1));
}

TEST_CASE("contiguous folds") {
  const auto f = contiguous_folds(23, 5);
  REQUIRE(f.size() == 5);
  const std::vector<std::pair<std::size_t, std::size_t>> want = {{0, 5}, {5, 10}, {10, 15}, {15, 19}, {19, 23}};
  CHECK(f == want);
  CHECK_THROWS_AS(contiguous_folds(3, 5), ValidationError);
}

TEST_CASE("efficient leave-one-out error equals explicit refits") {
  const MatrixXd x = testutil::randn(25, 4, 1);
  const MatrixXd y = testutil::randn(25, 2, 2);
  const std::vector<double> grid = {0.01, 1.0, 50.0};
  const MatrixXd fast = loo_errors(x, y, grid);
  REQUIRE(fast.rows() == 3);
  REQUIRE(fast.cols() == 2);
  for (std::size_t l = 0; l < grid.size(); ++l)
    for (Eigen::Index t = 0; t < 2; ++t)
      CHECK(fast(static_cast<Eigen::Index>(l), t) == doctest::Approx(brute_loo_error(x, y.col(t), grid[l])).epsilon(1e-9));

  SUBCASE("more features than samples") {
    const MatrixXd xw = testutil::randn(8, 12, 3);
    const MatrixXd yw = testutil::randn(8, 1, 4);
    const MatrixXd f = loo_errors(xw, yw, {0.1, 10.0});
    CHECK(f(0, 0) == doctest::Approx(brute_loo_error(xw, yw.col(0), 0.1)).epsilon(1e-8));
    CHECK(f(1, 0) == doctest::Approx(brute_loo_error(xw, yw.col(0), 10.0)).epsilon(1e-8));
  }
}

TEST_CASE("fit picks the lambda with least leave-one-out error per target") {
  const MatrixXd x = testutil::randn(60, 5, 5);
  MatrixXd y(60, 2);
  y.col(0) = x * VectorXd::LinSpaced(5, 1, 5);
  y.col(1) = testutil::randn_vec(60, 6);
  const auto grid = default_lambda_grid();
  const auto fit = fit_ridge_gcv(x, y, grid);
  const MatrixXd err = loo_errors(x, y, grid);
  for (Eigen::Index t = 0; t < 2; ++t) {
    Eigen::Index best;
    err.col(t).minCoeff(&best);
    CHECK(fit.lambdas[static_cast<std::size_t>(t)] == grid[static_cast<std::size_t>(best)]);
  }
  CHECK(fit.lambdas[0] == grid.front());
  CHECK(fit.lambdas[1] > fit.lambdas[0]);
  // intercept restores the mean
  CHECK(fit.predict(x).col(0).mean() == doctest::Approx(y.col(0).mean()).epsilon(1e-10));
}

TEST_CASE("planted linear model is recovered") {
  const MatrixXd x = testutil::randn(500, 10, 7);
  const VectorXd y = x * testutil::randn_vec(10, 8);
  auto grid = default_lambda_grid();
  grid.insert(grid.begin(), 1e-6);
  const auto s = ridge_cv_score(x, y, {10, grid});
  CHECK(s.score >= 0.999);
  CHECK(s.valid_folds == 10);
}

TEST_CASE("pure noise scores near zero") {
  const MatrixXd x = testutil::randn(1000, 10, 9);
  const VectorXd y = testutil::randn_vec(1000, 10);
  CHECK(std::abs(ridge_cv_score(x, y).score) <= 0.1);
}

TEST_CASE("partial signal scores near the population correlation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MatrixXd x = testutil::randn(1000, 10, 100 + seed);
    const VectorXd w = testutil::randn_vec(10, 200 + seed).normalized();
    // var(xw) = 1, noise var 3 -> population r = 0.5
    const VectorXd y = x * w + std::sqrt(3.0) * testutil::randn_vec(1000, 300 + seed);
    CHECK(std::abs(ridge_cv_score(x, y).score - 0.5) <= 0.1);
  }
}

TEST_CASE("score properties") {
  const MatrixXd x = testutil::randn(200, 6, 11);
  const VectorXd y = x.col(0) + 0.7 * testutil::randn_vec(200, 12);
  const double base = ridge_cv_score(x, y).score;

  SUBCASE("affine rescaling of y leaves the score unchanged") {
    // the refit absorbs the scale, including its sign
    CHECK(ridge_cv_score(x, 3.0 * y.array() + 2.0).score == doctest::Approx(base).epsilon(1e-9));
    CHECK(ridge_cv_score(x, -0.5 * y.array() + 1.0).score == doctest::Approx(base).epsilon(1e-9));
  }
  SUBCASE("grid order does not matter") {
    auto grid = default_lambda_grid();
    std::reverse(grid.begin(), grid.end());
    CHECK(ridge_cv_score(x, y, {10, grid}).score == base);
  }
  SUBCASE("noise columns barely move the score") {
    MatrixXd wide(200, 26);
    wide << x, testutil::randn(200, 20, 13);
    CHECK(std::abs(ridge_cv_score(wide, y).score - base) <= 0.05);
  }
  SUBCASE("batched scores equal single-target scores") {
    MatrixXd ys(200, 3);
    ys << y, testutil::randn_vec(200, 14), x.col(3);
    const auto batch = ridge_cv_scores(x, ys);
    for (Eigen::Index t = 0; t < 3; ++t)
      CHECK(batch[static_cast<std::size_t>(t)].score == doctest::Approx(ridge_cv_score(x, ys.col(t)).score).epsilon(1e-12));
  }
}

TEST_CASE("constant test folds are skipped") {
  const MatrixXd x = testutil::randn(40, 3, 15);
  VectorXd y = testutil::randn_vec(40, 16);
  y.head(20).setConstant(1.0); // the first two of four folds
  const auto s = ridge_cv_score(x, y, {4, default_lambda_grid()});
  CHECK(s.valid_folds == 2);
  CHECK(s.skipped_folds == 2);
  CHECK(std::isfinite(s.score));

  const auto all = ridge_cv_score(x, VectorXd::Constant(40, 2.0), {4, default_lambda_grid()});
  CHECK(std::isnan(all.score));
  CHECK(all.valid_folds == 0);
}

TEST_CASE("precondition errors") {
  const MatrixXd x = testutil::randn(10, 2, 1);
  CHECK_THROWS_AS(ridge_cv_score(x, testutil::randn_vec(10, 2), {10, default_lambda_grid()}), ValidationError);
  CHECK_THROWS_AS(ridge_cv_score(x, testutil::randn_vec(10, 2), {2, {}}), ValidationError);
  CHECK_THROWS_AS(ridge_cv_score(x, testutil::randn_vec(10, 2), {2, {-1.0}}), ValidationError);
}

}
