#include "neuroalign/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <unsupported/Eigen/SpecialFunctions>

namespace neuroalign::stats {

namespace {

void require_same_length(ConstVectorRef x, ConstVectorRef y) {
  if (x.size() != y.size()) throw ValidationError("inputs must have equal length");
}

CorrelationResult correlation_with_p(double r, std::size_t n, CorrelationMethod method) {
  CorrelationResult out;
  out.r = std::clamp(r, -1.0, 1.0);
  out.n = n;
  out.method = method;
  const double df = static_cast<double>(n) - 2.0;
  if (std::abs(out.r) >= 1.0) {
    out.p = 0.0;
  } else {
    const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
    out.p = student_t_two_sided_p(t, df);
  }
  return out;
}

// Pooled midranks with a tie-correction term sum(t^3 - t).
struct PooledRanks {
  Eigen::VectorXd ranks;
  double tie_term = 0.0;
};

PooledRanks pooled_midranks(ConstVectorRef a, ConstVectorRef b) {
  Eigen::VectorXd pooled(a.size() + b.size());
  pooled << a, b;
  PooledRanks out;
  out.ranks = midranks(pooled);
  std::vector<double> sorted(pooled.data(), pooled.data() + pooled.size());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    out.tie_term += t * t * t - t;
    i = j;
  }
  return out;
}

} // namespace

double mean(ConstVectorRef x) {
  if (x.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return x.mean();
}

double sem(ConstVectorRef x) {
  const auto n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = x.mean();
  const double var = (x.array() - m).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

double pearson_r(ConstVectorRef x, ConstVectorRef y) {
  require_same_length(x, y);
  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(xc.dot(yc) / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult pearson(ConstVectorRef x, ConstVectorRef y) {
  require_same_length(x, y);
  if (x.size() < 3) throw ValidationError("correlation needs at least 3 points");
  const double r = pearson_r(x, y);
  if (std::isnan(r)) throw Error("zero variance");
  return correlation_with_p(r, static_cast<std::size_t>(x.size()), CorrelationMethod::Pearson);
}

CorrelationResult spearman(ConstVectorRef x, ConstVectorRef y) {
  require_same_length(x, y);
  if (x.size() < 3) throw ValidationError("correlation needs at least 3 points");
  const double r = pearson_r(midranks(x), midranks(y));
  if (std::isnan(r)) throw Error("zero variance");
  return correlation_with_p(r, static_cast<std::size_t>(x.size()), CorrelationMethod::Spearman);
}

Eigen::VectorXd midranks(ConstVectorRef x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(Eigen::numext::betainc(df / 2.0, 0.5, x), 0.0, 1.0);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

PairedTTest paired_t_test(ConstVectorRef a, ConstVectorRef b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test needs equal pair counts");
  if (a.size() < 2) throw ValidationError("paired t-test needs at least 2 pairs");
  const Eigen::VectorXd d = a - b;
  const auto n = static_cast<double>(d.size());
  const double m = d.mean();
  const double var = (d.array() - m).square().sum() / (n - 1.0);
  PairedTTest out;
  out.df = static_cast<std::size_t>(d.size() - 1);
  if (var == 0.0) {
    if (m == 0.0) return out;
    out.t = m > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p = 0.0;
    return out;
  }
  out.t = m / std::sqrt(var / n);
  out.p = student_t_two_sided_p(out.t, static_cast<double>(out.df));
  return out;
}

RankSumResult wilcoxon_ranksum(ConstVectorRef a, ConstVectorRef b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("rank-sum test needs at least 2 values per group");
  const auto pooled = pooled_midranks(a, b);
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double n = n1 + n2;

  RankSumResult out;
  out.rank_sum = pooled.ranks.head(a.size()).sum();
  const double expected = n1 * (n + 1.0) / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - pooled.tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return out; // every value tied
  const double deviation = std::max(0.0, std::abs(out.rank_sum - expected) - 0.5);
  out.z = std::copysign(deviation / std::sqrt(var), out.rank_sum - expected);
  out.p = normal_two_sided_p(out.z);
  return out;
}

RankSumResult wilcoxon_ranksum_exact(ConstVectorRef a, ConstVectorRef b) {
  if (a.size() < 1 || b.size() < 1) throw ValidationError("rank-sum test needs non-empty groups");
  if (a.size() > 10 || b.size() > 10) throw ValidationError("exact rank-sum enumeration limited to 10 per group");
  const auto pooled = pooled_midranks(a, b);
  const auto n = static_cast<int>(pooled.ranks.size());
  const auto k = static_cast<int>(a.size());
  const double expected = static_cast<double>(k) * (n + 1.0) / 2.0;

  RankSumResult out;
  out.rank_sum = pooled.ranks.head(k).sum();
  const double observed = std::abs(out.rank_sum - expected);

  // Walk all k-subsets of n via a selection mask.
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  std::fill(mask.begin(), mask.begin() + k, true);
  std::size_t total = 0, extreme = 0;
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask[static_cast<std::size_t>(i)]) s += pooled.ranks[i];
    ++total;
    if (std::abs(s - expected) >= observed - 1e-9) ++extreme;
  } while (std::prev_permutation(mask.begin(), mask.end()));
  out.p = static_cast<double>(extreme) / static_cast<double>(total);
  return out;
}

HolmResult holm_correct(ConstVectorRef p, double alpha) {
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
  const auto m = static_cast<std::size_t>(p.size());
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  HolmResult out;
  out.adjusted.resize(p.size());
  out.reject.assign(m, false);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double scaled = std::min(1.0, static_cast<double>(m - j) * p[order[j]]);
    running = std::max(running, scaled);
    out.adjusted[order[j]] = running;
    out.reject[order[j]] = running < alpha;
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapCI bootstrap_ci(std::size_t n, const IndexStatistic& statistic, const BootstrapOptions& opts) {
  if (n < 3) throw ValidationError("bootstrap needs at least 3 data points");
  if (opts.n_resamples < 100) throw ValidationError("bootstrap needs at least 100 resamples");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw ValidationError("bootstrap level must lie in (0, 1)");

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);

  BootstrapCI out;
  out.point = statistic(identity);
  out.n_resamples = opts.n_resamples;
  out.level = opts.level;

  std::vector<double> values;
  values.reserve(opts.n_resamples);
  std::vector<std::size_t> idx(n);
  std::size_t undefined = 0;
  for (std::size_t b = 0; b < opts.n_resamples; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(std::uint64_t(b) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& i : idx) i = pick(rng);
    const double v = statistic(idx);
    if (std::isfinite(v))
      values.push_back(v);
    else
      ++undefined;
  }
  if (static_cast<double>(undefined) > 0.1 * static_cast<double>(opts.n_resamples))
    throw Error("bootstrap statistic undefined on more than 10% of resamples");

  std::sort(values.begin(), values.end());
  const double tail = (1.0 - opts.level) / 2.0;
  out.lo = quantile_sorted(values, tail);
  out.hi = quantile_sorted(values, 1.0 - tail);
  return out;
}

BootstrapCI bootstrap_ci(ConstVectorRef values, const std::function<double(const Eigen::VectorXd&)>& statistic,
                         const BootstrapOptions& opts) {
  const Eigen::VectorXd data = values;
  return bootstrap_ci(
      static_cast<std::size_t>(data.size()),
      [&](std::span<const std::size_t> idx) {
        Eigen::VectorXd sample(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) sample[static_cast<Eigen::Index>(i)] = data[static_cast<Eigen::Index>(idx[i])];
        return statistic(sample);
      },
      opts);
}

BootstrapCI bootstrap_ci(ConstVectorRef x, ConstVectorRef y,
                         const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& statistic,
                         const BootstrapOptions& opts) {
  require_same_length(x, y);
  const Eigen::VectorXd xs = x, ys = y;
  return bootstrap_ci(
      static_cast<std::size_t>(xs.size()),
      [&](std::span<const std::size_t> idx) {
        Eigen::VectorXd a(static_cast<Eigen::Index>(idx.size())), b(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
          a[static_cast<Eigen::Index>(i)] = xs[static_cast<Eigen::Index>(idx[i])];
          b[static_cast<Eigen::Index>(i)] = ys[static_cast<Eigen::Index>(idx[i])];
        }
        return statistic(a, b);
      },
      opts);
}

const char* significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

} // namespace neuroalign::stats
