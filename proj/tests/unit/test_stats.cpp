#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "neuroalign/stats.hpp"

using namespace neuroalign;
using namespace neuroalign::stats;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

// Textbook step-down: walk sorted p, reject while p(j) < alpha / (m - j).
std::vector<bool> holm_brute_force(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t j = 0; j < m; ++j) {
    if (static_cast<double>(m - j) * p[order[j]] < alpha)
      reject[order[j]] = true;
    else
      break;
  }
  return reject;
}

// Enumerates every split of the pooled midranks by bitmask.
double ranksum_exact_brute(const VectorXd& a, const VectorXd& b) {
  VectorXd pooled(a.size() + b.size());
  pooled << a, b;
  const auto n = pooled.size();
  VectorXd ranks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      less += pooled[j] < pooled[i];
      equal += pooled[j] == pooled[i];
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  const double observed = ranks.head(a.size()).sum();
  const double center = static_cast<double>(a.size()) * (static_cast<double>(n) + 1.0) / 2.0;
  long total = 0, extreme = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    if (__builtin_popcountl(static_cast<unsigned long>(mask)) != a.size()) continue;
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mask & (1L << i)) s += ranks[i];
    ++total;
    extreme += std::abs(s - center) >= std::abs(observed - center) - 1e-9;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

} // namespace

TEST_SUITE("stats") {

TEST_CASE("pearson examples") {
  CHECK(pearson(vec({1, 2, 3}), vec({2, 4, 6})).r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(vec({1, 2, 3}), vec({6, 4, 2})).r == doctest::Approx(-1.0).epsilon(1e-15));

  // Direct covariance formula: cov = 4/4... centered x = (-1.5,-.5,.5,1.5), y = (-1.5,.5,-.5,1.5)
  // sum xy = 2.25 - .25 - .25 + 2.25 = 4, sum x^2 = sum y^2 = 5 -> r = 0.8.
  const auto c = pearson(vec({1, 2, 3, 4}), vec({1, 3, 2, 4}));
  CHECK(c.r == doctest::Approx(0.8).epsilon(1e-14));
  // df = 2 has closed form p = 1 - |t| / sqrt(t^2 + 2), which equals 1 - |r| here.
  CHECK(c.p == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(c.n == 4);

  CHECK_THROWS_WITH_AS(pearson(vec({1, 1, 1}), vec({1, 2, 3})), "zero variance", Error);
  CHECK_THROWS_AS(pearson(vec({1, 2}), vec({1, 2})), ValidationError);
}

TEST_CASE("pearson is +-1 under affine maps and p matches the t distribution") {
  const VectorXd x = testutil::randn_vec(30, 3);
  CHECK(pearson(x, 2.5 * x.array() + 7.0).r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, -0.5 * x.array() + 1.0).r == doctest::Approx(-1.0).epsilon(1e-12));
  // r = 0.92 at n = 12 -> p ~ 2.2e-5.
  const double t = 0.92 * std::sqrt(10.0 / (1.0 - 0.92 * 0.92));
  CHECK(student_t_two_sided_p(t, 10) == doctest::Approx(2.24e-5).epsilon(0.02));
  // df = 1 is Cauchy: p = 1 - 2 atan(|t|) / pi.
  CHECK(student_t_two_sided_p(1.7, 1) == doctest::Approx(1.0 - 2.0 * std::atan(1.7) / M_PI).epsilon(1e-10));
}

TEST_CASE("spearman examples") {
  CHECK(spearman(vec({1, 2, 3, 4}), vec({-5, 0, 100, 1e6})).r == doctest::Approx(1.0));
  CHECK(spearman(vec({1, 2, 3}), vec({9, 1, 5})).r == doctest::Approx(-0.5).epsilon(1e-14));
  // x midranks (1.5, 1.5, 3) against (1, 2, 3): centered (-.5,-.5,1) . (-1,0,1) = 1.5,
  // norms^2 1.5 and 2 -> r = 1.5 / sqrt(3) = 0.866025...
  CHECK(spearman(vec({1, 1, 2}), vec({1, 2, 3})).r == doctest::Approx(1.5 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(midranks(vec({1, 1, 2})) == vec({1.5, 1.5, 3}));
}

TEST_CASE("spearman invariant to monotone transforms") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const VectorXd x = testutil::randn_vec(25, seed), y = testutil::randn_vec(25, seed + 100);
    const double r = spearman(x, y).r;
    CHECK(spearman(x.array().exp(), y.array().cube()).r == doctest::Approx(r).epsilon(1e-14));
  }
}

TEST_CASE("wilcoxon rank-sum") {
  SUBCASE("identical samples") {
    const auto w = wilcoxon_ranksum(vec({1, 2, 3}), vec({1, 2, 3}));
    CHECK(w.p > 0.9);
  }
  SUBCASE("fully separated groups sit at the minimum rank sum") {
    const auto w = wilcoxon_ranksum(vec({1, 2, 3}), vec({10, 11, 12}));
    CHECK(w.rank_sum == 6.0); // 1 + 2 + 3 is the smallest attainable
    const double z = (10.5 - 6.0 - 0.5) / std::sqrt(3.0 * 3.0 * 7.0 / 12.0);
    CHECK(w.p == doctest::Approx(std::erfc(z / std::sqrt(2.0))).epsilon(1e-12));
    // exact enumeration: 2 of the C(6,3) = 20 splits are this extreme
    CHECK(wilcoxon_ranksum_exact(vec({1, 2, 3}), vec({10, 11, 12})).p == doctest::Approx(0.1));
    CHECK(ranksum_exact_brute(vec({1, 2, 3}), vec({10, 11, 12})) == doctest::Approx(0.1));
  }
  SUBCASE("shift and monotone invariance") {
    const VectorXd a = testutil::randn_vec(7, 1), b = testutil::randn_vec(9, 2);
    const auto base = wilcoxon_ranksum(a, b);
    const auto shifted = wilcoxon_ranksum(a.array() + 3.0, b.array() + 3.0);
    CHECK(shifted.rank_sum == base.rank_sum);
    CHECK(shifted.p == base.p);
    const auto mono = wilcoxon_ranksum(a.array().exp(), b.array().exp());
    CHECK(mono.rank_sum == base.rank_sum);
    CHECK(mono.p == base.p);
  }
  SUBCASE("exact enumeration matches brute force, normal approximation stays close") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      const auto na = 2 + static_cast<Eigen::Index>(rng() % 6), nb = 2 + static_cast<Eigen::Index>(rng() % 6);
      VectorXd a(na), b(nb);
      // small integer support forces ties
      for (auto& v : a) v = static_cast<double>(rng() % 6);
      for (auto& v : b) v = static_cast<double>(rng() % 6) + 1.0;
      const double brute = ranksum_exact_brute(a, b);
      CHECK(wilcoxon_ranksum_exact(a, b).p == doctest::Approx(brute).epsilon(1e-12));
      if (na >= 5 && nb >= 5) CHECK(std::abs(wilcoxon_ranksum(a, b).p - brute) < 0.1);
    }
  }
  CHECK_THROWS_AS(wilcoxon_ranksum(vec({1}), vec({1, 2})), ValidationError);
}

TEST_CASE("holm examples") {
  auto h = holm_correct(vec({0.01, 0.03, 0.04}), 0.05);
  CHECK(h.reject == std::vector<bool>{true, false, false});
  CHECK(h.adjusted[0] == doctest::Approx(0.03));
  CHECK(h.adjusted[1] == doctest::Approx(0.06));
  CHECK(h.adjusted[2] == doctest::Approx(0.06));

  h = holm_correct(vec({0.04}), 0.05);
  CHECK(h.adjusted[0] == 0.04);
  CHECK(h.reject[0]);

  h = holm_correct(vec({1, 1, 1}), 0.05);
  CHECK(std::none_of(h.reject.begin(), h.reject.end(), [](bool b) { return b; }));
  CHECK_THROWS_AS(holm_correct(vec({0.5, 1.2}), 0.05), ValidationError);
}

TEST_CASE("holm matches brute-force step-down and is monotone") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.08);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng() % 12;
    std::vector<double> p(m);
    for (auto& v : p) v = (rng() % 4 == 0) ? std::round(u(rng) * 100) / 100 : u(rng);
    const auto h = holm_correct(Eigen::Map<const VectorXd>(p.data(), static_cast<Eigen::Index>(m)), 0.05);
    REQUIRE(h.reject == holm_brute_force(p, 0.05));

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(h.adjusted[static_cast<Eigen::Index>(order[j])] >= p[order[j]]);
      if (j > 0) CHECK(h.adjusted[static_cast<Eigen::Index>(order[j])] >= h.adjusted[static_cast<Eigen::Index>(order[j - 1])]);
    }
  }
}

TEST_CASE("paired t-test") {
  const VectorXd a = testutil::randn_vec(20, 4);
  const auto zero = paired_t_test(a, a);
  CHECK(zero.t == 0.0);
  CHECK(zero.p == 1.0);
  // d = (1, 2, 3): mean 2, sd 1 -> t = 2 / (1 / sqrt 3) = 2 sqrt 3
  const auto t = paired_t_test(vec({2, 4, 6}), vec({1, 2, 3}));
  CHECK(t.t == doctest::Approx(2.0 * std::sqrt(3.0)));
  CHECK(t.df == 2);
  CHECK_THROWS_AS(paired_t_test(vec({1, 2}), vec({1, 2, 3})), ValidationError);
}

TEST_CASE("bootstrap percentile intervals") {
  auto mean_stat = [](const VectorXd& v) { return v.mean(); };
  SUBCASE("constant data") {
    const auto ci = bootstrap_ci(vec({5, 5, 5, 5}), mean_stat, {1000, 0.95, 1});
    CHECK(ci.point == 5.0);
    CHECK(ci.lo == 5.0);
    CHECK(ci.hi == 5.0);
  }
  SUBCASE("same seed, same interval") {
    const VectorXd x = testutil::randn_vec(50, 8);
    const auto a = bootstrap_ci(x, mean_stat, {500, 0.9, 42});
    const auto b = bootstrap_ci(x, mean_stat, {500, 0.9, 42});
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    const auto c = bootstrap_ci(x, mean_stat, {500, 0.9, 43});
    CHECK(c.lo != a.lo);
  }
  SUBCASE("width follows the central limit theorem") {
    const VectorXd x = testutil::randn_vec(1000, 9);
    const auto ci = bootstrap_ci(x, mean_stat, {1000, 0.95, 3});
    const double expected = 2.0 * 1.96 / std::sqrt(1000.0);
    CHECK(std::abs((ci.hi - ci.lo) - expected) <= 0.25 * expected);
  }
  SUBCASE("interval contains the plug-in mean") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const VectorXd x = testutil::randn_vec(15, seed).array().exp();
      const auto ci = bootstrap_ci(x, mean_stat, {200, 0.95, seed});
      CHECK(ci.lo <= ci.point);
      CHECK(ci.point <= ci.hi);
    }
  }
  SUBCASE("undefined statistic") {
    const VectorXd x = vec({1, 2, 3, 4});
    auto sometimes = [](const VectorXd& v) { return v.maxCoeff() == v.minCoeff() ? NAN : 1.0; };
    CHECK_NOTHROW(bootstrap_ci(x, sometimes, {200, 0.95, 0}));
    auto never = [](const VectorXd&) { return NAN; };
    CHECK_THROWS_AS(bootstrap_ci(x, never, {200, 0.95, 0}), Error);
  }
  CHECK_THROWS_AS(bootstrap_ci(vec({1, 2}), mean_stat, {}), ValidationError);
}

TEST_CASE("significance stars") {
  CHECK(std::string(significance_stars(0.0005)) == "***");
  CHECK(std::string(significance_stars(0.005)) == "**");
  CHECK(std::string(significance_stars(0.02)) == "*");
  CHECK(std::string(significance_stars(0.2)).empty());
}

}
