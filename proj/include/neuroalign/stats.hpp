#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/error.hpp"

namespace neuroalign::stats {

using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

enum class CorrelationMethod { Pearson, Spearman };

struct CorrelationResult {
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
  CorrelationMethod method = CorrelationMethod::Pearson;
};

/// Sample Pearson r, or NaN when either input has zero variance.
double pearson_r(ConstVectorRef x, ConstVectorRef y);

/// Pearson r with a two-sided Student-t p-value on n - 2 degrees of freedom.
/// Throws Error("zero variance") on constant input.
CorrelationResult pearson(ConstVectorRef x, ConstVectorRef y);

/// Pearson correlation of midranks; p-value via the same t approximation.
CorrelationResult spearman(ConstVectorRef x, ConstVectorRef y);

/// Average ranks, 1-based; ties share the mean of the ranks they span.
Eigen::VectorXd midranks(ConstVectorRef x);

double student_t_two_sided_p(double t, double df);
double normal_two_sided_p(double z);

struct PairedTTest {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};

/// Two-sided paired t-test of a - b. All-zero differences give t = 0, p = 1.
PairedTTest paired_t_test(ConstVectorRef a, ConstVectorRef b);

struct RankSumResult {
  double rank_sum = 0.0; // sum of midranks of the first group
  double z = 0.0;
  double p = 1.0;
};

/// Wilcoxon rank-sum with tie-corrected variance and continuity correction.
RankSumResult wilcoxon_ranksum(ConstVectorRef a, ConstVectorRef b);

/// Exact two-sided p by enumerating every assignment of pooled midranks.
/// Group sizes are limited to 10 each.
RankSumResult wilcoxon_ranksum_exact(ConstVectorRef a, ConstVectorRef b);

struct HolmResult {
  Eigen::VectorXd adjusted;
  std::vector<bool> reject;
};

/// Holm step-down family-wise correction.
HolmResult holm_correct(ConstVectorRef p, double alpha);

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_resamples = 0;
  double level = 0.0;
};

struct BootstrapOptions {
  std::size_t n_resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Statistic evaluated on a resample, given as indices into the data.
/// Return NaN when the statistic is undefined on that resample.
using IndexStatistic = std::function<double(std::span<const std::size_t>)>;

/// Percentile bootstrap over n data points. Resample b draws its indices from
/// a generator seeded by (seed, b), so results do not depend on scheduling.
BootstrapCI bootstrap_ci(std::size_t n, const IndexStatistic& statistic, const BootstrapOptions& opts = {});

BootstrapCI bootstrap_ci(ConstVectorRef values, const std::function<double(const Eigen::VectorXd&)>& statistic,
                         const BootstrapOptions& opts = {});

BootstrapCI bootstrap_ci(ConstVectorRef x, ConstVectorRef y,
                         const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& statistic,
                         const BootstrapOptions& opts = {});

/// Linear-interpolated quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

/// "***", "**", "*" or "" for p below 0.001, 0.01, 0.05.
const char* significance_stars(double p);

double mean(ConstVectorRef x);
/// Standard error of the mean, sample standard deviation over sqrt(n).
double sem(ConstVectorRef x);

} // namespace neuroalign::stats
