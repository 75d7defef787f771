#include "neuroalign/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "neuroalign/stats.hpp"

namespace neuroalign::encoding {

namespace {

struct CenteredSvd {
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd y_mean;
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  Eigen::MatrixXd uty; // U^T (Y - mean)
  Eigen::MatrixXd yc;
};

CenteredSvd centered_svd(ConstMatrixRef x, ConstMatrixRef y) {
  if (x.rows() != y.rows()) throw ValidationError("X and y row counts differ");
  if (x.rows() < 2) throw ValidationError("ridge needs at least 2 samples");
  CenteredSvd out;
  out.x_mean = x.colwise().mean();
  out.y_mean = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - out.x_mean;
  out.yc = y.rowwise() - out.y_mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.s = svd.singularValues();
  out.v = svd.matrixV();
  out.uty = out.u.transpose() * out.yc;
  return out;
}

std::vector<double> sorted_grid(const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw ValidationError("lambda grid must be non-empty");
  std::vector<double> grid = lambdas;
  for (double l : grid)
    if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("lambdas must be positive and finite");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

Eigen::MatrixXd loo_errors_from(const CenteredSvd& c, const std::vector<double>& grid) {
  const auto n = c.u.rows();
  const double n_inv = 1.0 / static_cast<double>(n);
  const Eigen::ArrayXd s2 = c.s.array().square();
  const Eigen::MatrixXd u2 = c.u.array().square().matrix();
  // Residual split: Yc = U C + Y_perp, so R(lambda) = Y_perp + U diag(1 - f) C.
  const Eigen::MatrixXd y_perp = c.yc - c.u * c.uty;

  Eigen::MatrixXd errors(static_cast<Eigen::Index>(grid.size()), c.yc.cols());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Eigen::VectorXd f = (s2 / (s2 + grid[g])).matrix();
    const Eigen::ArrayXd leverage = (u2 * f).array() + n_inv;
    const Eigen::VectorXd shrink = (1.0 - f.array()).matrix();
    const Eigen::MatrixXd residual = y_perp + c.u * (shrink.asDiagonal() * c.uty);
    const Eigen::ArrayXd denom = 1.0 - leverage;
    if ((denom < 1e-12).any()) {
      errors.row(static_cast<Eigen::Index>(g)).setConstant(std::numeric_limits<double>::infinity());
      continue;
    }
    errors.row(static_cast<Eigen::Index>(g)) =
        (residual.array().colwise() / denom).square().colwise().mean();
  }
  return errors;
}

} // namespace

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -2.0 + 0.5 * i));
  return grid;
}

Eigen::MatrixXd loo_errors(ConstMatrixRef x, ConstMatrixRef y, const std::vector<double>& lambdas) {
  return loo_errors_from(centered_svd(x, y), lambdas);
}

GcvRidgeFit fit_ridge_gcv(ConstMatrixRef x, ConstMatrixRef y, const std::vector<double>& lambdas) {
  const auto grid = sorted_grid(lambdas);
  const auto c = centered_svd(x, y);
  const Eigen::MatrixXd errors = loo_errors_from(c, grid);
  const Eigen::ArrayXd s2 = c.s.array().square();

  GcvRidgeFit fit;
  fit.coef.resize(x.cols(), y.cols());
  fit.lambdas.resize(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < errors.rows(); ++g)
      if (errors(g, t) < errors(best, t)) best = g;
    const double lambda = grid[static_cast<std::size_t>(best)];
    fit.lambdas[static_cast<std::size_t>(t)] = lambda;
    const Eigen::VectorXd gain = (c.s.array() / (s2 + lambda)).matrix();
    fit.coef.col(t) = c.v * (gain.asDiagonal() * c.uty.col(t));
  }
  fit.intercept = c.y_mean - c.x_mean * fit.coef;
  return fit;
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t n_folds) {
  if (n_folds < 2) throw ValidationError("need at least 2 folds");
  if (n < n_folds) throw ValidationError("more folds than samples");
  std::vector<std::pair<std::size_t, std::size_t>> folds;
  const std::size_t base = n / n_folds, extra = n % n_folds;
  std::size_t start = 0;
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds.emplace_back(start, start + len);
    start += len;
  }
  return folds;
}

std::vector<RidgeCvScore> ridge_cv_scores(ConstMatrixRef x, ConstMatrixRef y, const RidgeOptions& opts) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (static_cast<std::size_t>(y.rows()) != n) throw ValidationError("X and y row counts differ");
  if (n < 2 * opts.n_folds) throw ValidationError("ridge CV needs at least 2 words per fold");
  if (!y.allFinite() || !x.allFinite()) throw ValidationError("ridge inputs must be finite");

  const auto targets = static_cast<std::size_t>(y.cols());
  std::vector<RidgeCvScore> out(targets);
  std::vector<double> sums(targets, 0.0);

  for (const auto& [begin, end] : contiguous_folds(n, opts.n_folds)) {
    const auto b = static_cast<Eigen::Index>(begin), len = static_cast<Eigen::Index>(end - begin);
    const auto rest = static_cast<Eigen::Index>(n) - b - len;
    Eigen::MatrixXd x_train(x.rows() - len, x.cols()), y_train(y.rows() - len, y.cols());
    x_train << x.topRows(b), x.bottomRows(rest);
    y_train << y.topRows(b), y.bottomRows(rest);

    const auto fit = fit_ridge_gcv(x_train, y_train, opts.lambdas);
    const Eigen::MatrixXd predicted = fit.predict(x.middleRows(b, len));
    for (std::size_t t = 0; t < targets; ++t) {
      const auto col = static_cast<Eigen::Index>(t);
      const double r = stats::pearson_r(predicted.col(col), y.col(col).segment(b, len));
      if (std::isnan(r)) {
        ++out[t].skipped_folds;
      } else {
        sums[t] += r;
        ++out[t].valid_folds;
      }
    }
  }
  for (std::size_t t = 0; t < targets; ++t)
    out[t].score = out[t].valid_folds == 0 ? std::numeric_limits<double>::quiet_NaN()
                                           : sums[t] / static_cast<double>(out[t].valid_folds);
  return out;
}

RidgeCvScore ridge_cv_score(ConstMatrixRef x, ConstVectorRef y, const RidgeOptions& opts) {
  return ridge_cv_scores(x, y, opts).front();
}

} // namespace neuroalign::encoding
