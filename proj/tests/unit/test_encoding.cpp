#include <doctest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "neuroalign/encoding.hpp"

using namespace neuroalign;
using namespace neuroalign::encoding;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

EncodingResult result(const std::string& id, const MatrixXd& scores, io::ContextWindow cw = io::ContextWindow::full()) {
  EncodingResult e;
  e.model_id = id;
  e.context_window = cw;
  e.scores = scores;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) e.electrode_ids.push_back("e" + std::to_string(i));
  return e;
}

// Electrodes read out layer `planted` (0-based) plus a little noise.
io::ResponseMatrix planted_responses(const io::EmbeddingTensor& t, std::size_t planted, Eigen::Index n_electrodes,
                                     double noise) {
  io::ResponseMatrix r;
  r.word_ids = t.word_ids;
  const MatrixXd w = testutil::randn(static_cast<Eigen::Index>(t.n_dims), n_electrodes, 77);
  r.values = (t.layer_double(planted) * w).transpose() +
             noise * testutil::randn(n_electrodes, static_cast<Eigen::Index>(t.n_words), 78);
  for (Eigen::Index e = 0; e < n_electrodes; ++e) r.electrode_ids.push_back("e" + std::to_string(e));
  return r;
}

io::EmbeddingTensor independent_layers(std::size_t n_layers, Eigen::Index words, Eigen::Index dims) {
  std::vector<MatrixXd> layers;
  for (std::size_t l = 0; l < n_layers; ++l) layers.push_back(testutil::randn(words, dims, 500 + l));
  return testutil::tensor_from_layers(layers);
}

} // namespace

TEST_SUITE("encoding") {

TEST_CASE("PCA on collinear points") {
  MatrixXd x(5, 2);
  for (int i = 0; i < 5; ++i) x.row(i) << i - 1.3, 2.0 * (i - 1.3);
  const auto p = fit_pca(x, 2);
  REQUIRE(p.components.rows() == 2);
  CHECK(p.components(0, 0) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(p.components(0, 1) == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(std::abs(p.explained_variance[1]) < 1e-12);
}

TEST_CASE("PCA with a full basis reconstructs the input") {
  const MatrixXd x = testutil::randn(40, 6, 1) * 3.0;
  const auto p = fit_pca(x, 6);
  const MatrixXd back = p.inverse_transform(p.transform(x));
  CHECK((back - x).norm() / x.norm() < 1e-6);
  CHECK((p.components * p.components.transpose() - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
  for (Eigen::Index i = 1; i < 6; ++i) CHECK(p.explained_variance[i] <= p.explained_variance[i - 1]);
}

TEST_CASE("PCA variances match the sample covariance eigenvalues") {
  MatrixXd x = testutil::randn(10000, 2, 2);
  x.col(0) *= 3.0;
  const auto p = fit_pca(x, 2);
  CHECK(std::abs(p.explained_variance[0] / 9.0 - 1.0) <= 0.1);
  CHECK(std::abs(p.explained_variance[1] - 1.0) <= 0.1);

  const MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered.transpose() * centered / 9999.0);
  CHECK(p.explained_variance[0] == doctest::Approx(eig.eigenvalues()[1]).epsilon(1e-9));
  CHECK(p.explained_variance[1] == doctest::Approx(eig.eigenvalues()[0]).epsilon(1e-9));
}

TEST_CASE("PCA clamps k and rejects constant data") {
  const auto p = fit_pca(testutil::randn(5, 10, 3), 500);
  CHECK(p.components.rows() == 4);
  CHECK_THROWS_WITH_AS(fit_pca(MatrixXd::Ones(6, 3), 2), "zero variance", Error);
  SUBCASE("sign convention puts the largest loading positive") {
    for (Eigen::Index c = 0; c < p.components.rows(); ++c) {
      Eigen::Index arg;
      p.components.row(c).cwiseAbs().maxCoeff(&arg);
      CHECK(p.components(c, arg) > 0.0);
    }
  }
}

TEST_CASE("planted layer gets the highest scores") {
  const auto t = independent_layers(8, 400, 12);
  const auto r = planted_responses(t, 4, 6, 0.5);
  const auto e = encode_model(t, r, {0, {}, 2});
  CHECK(e.scores.rows() == 6);
  CHECK(e.scores.cols() == 8);
  Eigen::Index best;
  e.scores.colwise().mean().maxCoeff(&best);
  CHECK(best == 4);

  SUBCASE("PCA with enough components changes little") {
    const auto with_pca = encode_model(t, r, {12, {}, 2});
    CHECK(std::abs(with_pca.scores.col(4).mean() - e.scores.col(4).mean()) <= 0.02);
  }
  SUBCASE("deterministic regardless of jobs") {
    const auto again = encode_model(t, r, {0, {}, 1});
    CHECK(again.scores == e.scores);
  }
}

TEST_CASE("noise responses score near zero") {
  const auto t = independent_layers(3, 1000, 10);
  io::ResponseMatrix r;
  r.word_ids = t.word_ids;
  r.values = testutil::randn(4, 1000, 12);
  r.electrode_ids = {"a", "b", "c", "d"};
  const auto e = encode_model(t, r, {0, {}, 1});
  CHECK(e.scores.cwiseAbs().maxCoeff() <= 0.1);
}

TEST_CASE("single layer and electrode reduces to ridge_cv_score") {
  const auto t = independent_layers(1, 200, 5);
  const auto r = planted_responses(t, 0, 1, 1.0);
  const auto e = encode_model(t, r, {0, {}, 1});
  CHECK(e.scores(0, 0) == ridge_cv_score(t.layer_double(0), r.values.row(0).transpose()).score);
  io::ResponseMatrix shifted = r;
  shifted.word_ids.back() += 1000;
  CHECK_THROWS_AS(encode_model(t, shifted), ValidationError);
}

TEST_CASE("peak statistics") {
  const auto p1 = peak_of(vec({0.1, 0.5, 0.3}));
  REQUIRE(p1);
  CHECK(p1->peak_score == 0.5);
  CHECK(p1->peak_layer == 2);
  CHECK(peak_of(vec({0.4, 0.4}))->peak_layer == 1);
  CHECK(peak_of(vec({kNaN, 0.2}))->peak_layer == 2);
  CHECK_FALSE(peak_of(vec({kNaN, kNaN})).has_value());

  MatrixXd s(2, 3);
  s << 0.1, 0.3, 0.2, kNaN, kNaN, kNaN;
  const auto stats = peak_stats(result("m", s));
  REQUIRE(stats.peaks.size() == 1);
  CHECK(stats.peaks[0].peak_layer == 2);
  CHECK(stats.excluded == std::vector<std::size_t>{1});
}

TEST_CASE("sliding peak layer") {
  const VectorXd dist = VectorXd::LinSpaced(60, 0, 59).reverse();
  const auto flat = sliding_peak_layer(VectorXd::Constant(60, 7.0), dist, 50);
  CHECK((flat.layer.array() == 7.0).all());
  CHECK(flat.dist[0] <= flat.dist[59]);

  // peak layer equal to the rank in sorted distance order
  const VectorXd d = VectorXd::LinSpaced(10, 1, 10);
  const auto c = sliding_peak_layer(d, d, 3);
  for (Eigen::Index i = 1; i < 9; ++i) CHECK(c.layer[i] == doctest::Approx(d[i]).epsilon(1e-14));

  CHECK_THROWS_AS(sliding_peak_layer(d, d, 11), ValidationError);
  CHECK_THROWS_AS(sliding_peak_layer(vec({1}), vec({1}), 1), ValidationError);
}

TEST_CASE("context effect") {
  const MatrixXd s = testutil::randn(3, 4, 5);
  const std::vector<EncodingResult> same_full = {result("a", s), result("b", s)};
  const std::vector<EncodingResult> same_one = {result("a", s, io::ContextWindow{1}), result("b", s, io::ContextWindow{1})};
  CHECK((context_effect(same_full, same_one).array() == 0.0).all());

  MatrixXd lower = s;
  lower.array() -= 0.05;
  const std::vector<EncodingResult> low = {result("b", lower, io::ContextWindow{1}), result("a", lower, io::ContextWindow{1})};
  CHECK((context_effect(same_full, low).array() - 0.05).abs().maxCoeff() < 1e-12);

  // deltas 0.1, -0.02, 0.04 over three models average to 0.04
  MatrixXd f(1, 2), l1(1, 2), l2(1, 2), l3(1, 2);
  f << 0.5, 0.2;
  l1 << 0.4, 0.1;
  l2 << 0.52, 0.1;
  l3 << 0.46, 0.3;
  const std::vector<EncodingResult> full3 = {result("x", f), result("y", f), result("z", f)};
  const std::vector<EncodingResult> lim3 = {result("x", l1, io::ContextWindow{1}), result("y", l2, io::ContextWindow{1}),
                                            result("z", l3, io::ContextWindow{1})};
  CHECK(context_effect(full3, lim3)[0] == doctest::Approx(0.04).epsilon(1e-12));

  const std::vector<EncodingResult> mismatched = {result("q", s, io::ContextWindow{1}), result("b", s, io::ContextWindow{1})};
  CHECK_THROWS_AS(context_effect(same_full, mismatched), ValidationError);
}

}
