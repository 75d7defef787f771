#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "neuroalign/encoding.hpp"
#include "neuroalign/hierarchy.hpp"
#include "neuroalign/similarity.hpp"
#include "neuroalign/synth.hpp"

using namespace neuroalign;
using namespace neuroalign::synth;
using Eigen::MatrixXd;

namespace {

PlantSpec small_spec(std::uint64_t seed = 0, double noise = 0.0) {
  PlantSpec s;
  s.n_layers = 10;
  s.n_words = 300;
  s.n_dims = 16;
  s.n_electrodes = 36;
  s.seed = seed;
  s.noise_sigma = noise;
  return s;
}

double peak_recovery(const PlantSpec& spec) {
  const auto teacher = generate_teacher(spec);
  const auto brain = generate_brain(spec, teacher);
  const auto enc = encoding::encode_model(teacher, brain.responses, {0, {}, 2});
  const auto peaks = encoding::peak_stats(enc);
  std::size_t hits = 0;
  for (const auto& p : peaks.peaks) hits += p.peak_layer == brain.planted_layer[p.electrode];
  return static_cast<double>(hits) / static_cast<double>(spec.n_electrodes);
}

} // namespace

TEST_SUITE("synth") {

TEST_CASE("default assignment spans layer 3 to L - 2") {
  PlantSpec s;
  CHECK(s.n_bins() == 6);
  CHECK(s.default_assignment() == std::vector<int>{3, 8, 14, 19, 25, 30});
  CHECK_NOTHROW(s.validate());

  s.layer_assignment = {1, 2, 2, 40, 5, 6};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.layer_assignment = {4, 3, 5, 6, 7, 8};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.monotone = false;
  CHECK_NOTHROW(s.validate());
  s.noise_sigma = -1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("random orthogonal matrices") {
  const MatrixXd q = random_orthogonal(12, 3);
  CHECK((q.transpose() * q - MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(q == random_orthogonal(12, 3));
  CHECK(q != random_orthogonal(12, 4));
}

TEST_CASE("teacher is deterministic and decorrelates with depth") {
  PlantSpec spec = small_spec(5);
  const auto a = generate_teacher(spec), b = generate_teacher(spec);
  CHECK(a.data == b.data);
  CHECK(a.n_layers == 10);
  spec.seed = 6;
  CHECK(generate_teacher(spec).data != a.data);

  const similarity::KernelSettings linear{similarity::Kernel::Linear, 1.0};
  const double self = similarity::cka(a.layer_double(0), a.layer_double(0), linear);
  const double adjacent = similarity::cka(a.layer_double(0), a.layer_double(1), linear);
  const double far = similarity::cka(a.layer_double(0), a.layer_double(9), linear);
  CHECK(self == doctest::Approx(1.0));
  CHECK(far < adjacent);

  // unit variance is preserved along the chain
  for (std::size_t l = 0; l < a.n_layers; ++l) {
    const double var = a.layer_double(l).array().square().mean();
    CHECK(std::abs(var - 1.0) < 0.1);
  }
}

TEST_CASE("brain metadata follows distance") {
  const auto spec = small_spec(1);
  const auto teacher = generate_teacher(spec);
  const auto brain = generate_brain(spec, teacher);
  REQUIRE(brain.electrodes.size() == spec.n_electrodes);
  CHECK(brain.responses.values.rows() == 36);
  CHECK(brain.responses.word_ids == teacher.word_ids);
  const auto assignment = spec.resolved_assignment();
  for (std::size_t e = 0; e < brain.electrodes.size(); ++e) {
    const auto& m = brain.electrodes[e];
    CHECK(m.dist_pmhg_mm >= 0.0);
    CHECK(m.dist_pmhg_mm < 60.0);
    CHECK(brain.planted_layer[e] == assignment[static_cast<std::size_t>(m.dist_pmhg_mm / 10.0)]);
    CHECK(m.region == (m.dist_pmhg_mm < 10 ? io::Region::HG : m.dist_pmhg_mm < 30 ? io::Region::STG
                                               : m.dist_pmhg_mm < 45 ? io::Region::Subcentral : io::Region::IFG));
    REQUIRE(m.lag_ms.has_value());
    CHECK(std::abs(*m.lag_ms - (50.0 + 4.0 * m.dist_pmhg_mm)) < 12.0);
  }
  const auto again = generate_brain(spec, teacher);
  CHECK(again.responses.values == brain.responses.values);

  auto wrong = spec;
  wrong.n_dims = 8;
  CHECK_THROWS_AS(generate_brain(wrong, teacher), ValidationError);
}

TEST_CASE("noiseless plant: peak layer equals the planted layer") {
  CHECK(peak_recovery(small_spec(2)) >= 0.95);
}

TEST_CASE("plant recovery degrades as noise grows") {
  const double levels[] = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> mean_recovery;
  for (double noise : levels) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) total += peak_recovery(small_spec(seed, noise));
    mean_recovery.push_back(total / 10.0);
  }
  for (std::size_t i = 1; i < mean_recovery.size(); ++i) CHECK(mean_recovery[i] <= mean_recovery[i - 1]);
  CHECK(mean_recovery.front() > mean_recovery.back());
}

TEST_CASE("constant assignment has no gradient") {
  auto spec = small_spec(4, 1.0);
  spec.layer_assignment = std::vector<int>(6, 5);
  const auto teacher = generate_teacher(spec);
  const auto brain = generate_brain(spec, teacher);
  const auto enc = encoding::encode_model(teacher, brain.responses, {0, {}, 2});
  const auto rep = hierarchy::align_hierarchy(brain.electrodes, enc, {});
  CHECK((rep.degenerate.has_value() || std::abs(rep.alignment_r) <= 0.3));
}

TEST_CASE("shifted layers") {
  const auto t = generate_teacher(small_spec(7));
  const auto s = shift_layers(t, 3, "shifted");
  CHECK(s.model_id == "shifted");
  for (std::size_t j = 0; j < 10; ++j) CHECK(s.layer_double(j) == t.layer_double((j + 7) % 10));
  CHECK(shift_layers(t, -3, "x").layer_double(0) == t.layer_double(3));
  CHECK(shift_layers(t, 10, "x").data == t.data);
}

TEST_CASE("pseudo-models") {
  const auto t = generate_teacher(small_spec(8));
  const auto p = pseudo_model(t, "p", 0.5, 1);
  CHECK(p.model_id == "p");
  CHECK(p.data == pseudo_model(t, "p", 0.5, 1).data);
  const similarity::KernelSettings linear{similarity::Kernel::Linear, 1.0};
  const auto clean = pseudo_model(t, "c", 0.0, 1);
  CHECK(similarity::cka(clean.layer_double(4), t.layer_double(4), linear) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(similarity::cka(p.layer_double(4), t.layer_double(4), linear) < 0.999);
  CHECK_THROWS_AS(pseudo_model(t, "bad", -1.0, 1), ValidationError);
}

TEST_CASE("context variants") {
  const auto t = generate_teacher(small_spec(9));
  CHECK(context_variant(t, io::ContextWindow::full(), 0.8, 1).data == t.data);
  const auto one = context_variant(t, io::ContextWindow{1}, 0.8, 1);
  CHECK(one.context_window == io::ContextWindow{1});
  CHECK(one.layer_double(0) == t.layer_double(0));
  const similarity::KernelSettings linear{similarity::Kernel::Linear, 1.0};
  const double deep_one = similarity::cka(one.layer_double(9), t.layer_double(9), linear);
  const double deep_fifty = similarity::cka(context_variant(t, io::ContextWindow{50}, 0.8, 1).layer_double(9), t.layer_double(9), linear);
  CHECK(deep_one < deep_fifty);
  CHECK_THROWS_AS(context_variant(t, io::ContextWindow{1}, 1.5, 1), ValidationError);
}

}
