#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/error.hpp"

namespace neuroalign::encoding {

using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// 13 points log-spaced from 1e-2 to 1e4.
std::vector<double> default_lambda_grid();

/// Ridge fit with intercept, one regularization strength per target column,
/// each chosen by efficient leave-one-out error over the grid.
struct GcvRidgeFit {
  Eigen::MatrixXd coef;       // n_features x n_targets
  Eigen::RowVectorXd intercept;
  std::vector<double> lambdas; // chosen value per target

  Eigen::MatrixXd predict(ConstMatrixRef x) const {
    return (x * coef).rowwise() + intercept;
  }
};

/// The grid is searched in ascending order; ties resolve to the smaller value.
GcvRidgeFit fit_ridge_gcv(ConstMatrixRef x, ConstMatrixRef y, const std::vector<double>& lambdas);

/// Mean leave-one-out squared error for every (lambda, target) pair,
/// lambdas on rows. Exposed for testing against brute-force refits.
Eigen::MatrixXd loo_errors(ConstMatrixRef x, ConstMatrixRef y, const std::vector<double>& lambdas);

/// [begin, end) word ranges of contiguous folds; the first n % k folds get one extra word.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_folds(std::size_t n, std::size_t n_folds);

struct RidgeOptions {
  std::size_t n_folds = 10;
  std::vector<double> lambdas = default_lambda_grid();
};

struct RidgeCvScore {
  double score = 0.0; // NaN when every fold was invalid
  std::size_t valid_folds = 0;
  std::size_t skipped_folds = 0;
};

/// Mean over contiguous held-out folds of the prediction/truth Pearson r.
/// Folds where r is undefined (constant truth or prediction) are skipped.
RidgeCvScore ridge_cv_score(ConstMatrixRef x, ConstVectorRef y, const RidgeOptions& opts = {});

/// Same as ridge_cv_score for every column of y, sharing the per-fold SVDs.
std::vector<RidgeCvScore> ridge_cv_scores(ConstMatrixRef x, ConstMatrixRef y, const RidgeOptions& opts = {});

} // namespace neuroalign::encoding
