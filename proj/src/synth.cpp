#include "neuroalign/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <Eigen/QR>

#include "neuroalign/error.hpp"

namespace neuroalign::synth {

namespace {

// Independent stream per (seed, purpose, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint32_t {
  kTeacherBase = 1,
  kTeacherMix = 2,
  kTeacherFresh = 3,
  kElectrodePlace = 4,
  kElectrodeWeights = 5,
  kElectrodeNoise = 6,
  kModelRotation = 7,
  kModelNoise = 8,
  kContextNoise = 9,
  kOrthogonal = 10,
  kLag = 11,
};

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

void store_layer(io::EmbeddingTensor& t, std::size_t layer, const Eigen::MatrixXd& values) {
  Eigen::Map<io::RowMatrixXf> dst(t.data.data() + layer * t.n_words * t.n_dims, static_cast<Eigen::Index>(t.n_words),
                                  static_cast<Eigen::Index>(t.n_dims));
  dst = values.cast<float>();
}

io::EmbeddingTensor empty_like(const io::EmbeddingTensor& t, const std::string& model_id) {
  io::EmbeddingTensor out;
  out.model_id = model_id;
  out.context_window = t.context_window;
  out.n_layers = t.n_layers;
  out.n_words = t.n_words;
  out.n_dims = t.n_dims;
  out.word_ids = t.word_ids;
  out.data.resize(t.data.size());
  return out;
}

io::Region region_for(double dist_mm) {
  if (dist_mm < 10.0) return io::Region::HG;
  if (dist_mm < 30.0) return io::Region::STG;
  if (dist_mm < 45.0) return io::Region::Subcentral;
  return io::Region::IFG;
}

} // namespace

std::size_t PlantSpec::n_bins() const {
  const auto first = static_cast<long long>(std::floor(dist_lo_mm / bin_width_mm));
  const auto last = static_cast<long long>(std::ceil(dist_hi_mm / bin_width_mm));
  return static_cast<std::size_t>(std::max<long long>(1, last - first));
}

std::vector<int> PlantSpec::default_assignment() const {
  const std::size_t bins = n_bins();
  std::vector<int> out;
  const double lo = std::min<double>(3.0, static_cast<double>(n_layers));
  const double hi = std::max<double>(lo, static_cast<double>(n_layers) - 2.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const double frac = bins == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(bins - 1);
    out.push_back(static_cast<int>(std::lround(lo + frac * (hi - lo))));
  }
  return out;
}

std::vector<int> PlantSpec::resolved_assignment() const {
  return layer_assignment.empty() ? default_assignment() : layer_assignment;
}

void PlantSpec::validate() const {
  if (n_layers == 0 || n_words == 0 || n_dims == 0 || n_electrodes == 0 || n_subjects == 0)
    throw ValidationError("plant sizes must be positive");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
  if (!(dist_lo_mm >= 0.0 && dist_hi_mm > dist_lo_mm)) throw ValidationError("distance range must satisfy 0 <= lo < hi");
  if (!(bin_width_mm > 0.0)) throw ValidationError("bin width must be positive");
  if (!(mixing_rate >= 0.0 && mixing_rate <= 1.0)) throw ValidationError("mixing rate must lie in [0, 1]");
  const auto assignment = resolved_assignment();
  for (std::size_t b = 0; b < assignment.size(); ++b) {
    if (assignment[b] < 1 || assignment[b] > static_cast<int>(n_layers))
      throw ValidationError("planted layer outside [1, n_layers]");
    if (monotone && b > 0 && assignment[b] < assignment[b - 1])
      throw ValidationError("layer assignment must be non-decreasing when monotone");
  }
}

Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed) {
  auto rng = stream(seed, kOrthogonal);
  const Eigen::MatrixXd a = gaussian(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < q.cols(); ++i)
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  return q;
}

io::EmbeddingTensor generate_teacher(const PlantSpec& spec) {
  spec.validate();
  io::EmbeddingTensor t;
  t.model_id = "teacher";
  t.context_window = io::ContextWindow::full();
  t.n_layers = spec.n_layers;
  t.n_words = spec.n_words;
  t.n_dims = spec.n_dims;
  t.word_ids.resize(spec.n_words);
  for (std::size_t i = 0; i < spec.n_words; ++i) t.word_ids[i] = static_cast<io::WordId>(i);
  t.data.resize(spec.n_layers * spec.n_words * spec.n_dims);

  const auto rows = static_cast<Eigen::Index>(spec.n_words), cols = static_cast<Eigen::Index>(spec.n_dims);
  auto base = stream(spec.seed, kTeacherBase);
  Eigen::MatrixXd layer = gaussian(rows, cols, base);
  store_layer(t, 0, layer);

  const double rho = spec.mixing_rate;
  const double fresh_scale = std::sqrt(1.0 - rho * rho);
  for (std::size_t l = 1; l < spec.n_layers; ++l) {
    const Eigen::MatrixXd mix = random_orthogonal(spec.n_dims, spec.seed * 1000003ULL + kTeacherMix * 7919ULL + l);
    auto fresh_rng = stream(spec.seed, kTeacherFresh, l);
    const Eigen::MatrixXd fresh = gaussian(rows, cols, fresh_rng);
    layer = rho * (layer * mix) + fresh_scale * fresh;
    store_layer(t, l, layer);
  }
  return t;
}

Brain generate_brain(const PlantSpec& spec, const io::EmbeddingTensor& teacher) {
  spec.validate();
  if (teacher.n_layers != spec.n_layers || teacher.n_words != spec.n_words || teacher.n_dims != spec.n_dims)
    throw ValidationError("teacher shape does not match the plant");
  const auto assignment = spec.resolved_assignment();
  const auto first_bin = static_cast<long long>(std::floor(spec.dist_lo_mm / spec.bin_width_mm));

  Brain brain;
  brain.responses.word_ids = teacher.word_ids;
  brain.responses.values.resize(static_cast<Eigen::Index>(spec.n_electrodes), static_cast<Eigen::Index>(spec.n_words));

  for (std::size_t e = 0; e < spec.n_electrodes; ++e) {
    auto place = stream(spec.seed, kElectrodePlace, e);
    std::uniform_real_distribution<double> where(spec.dist_lo_mm, spec.dist_hi_mm);
    const double dist = where(place);
    const auto bin = static_cast<long long>(std::floor(dist / spec.bin_width_mm)) - first_bin;
    const auto slot = std::min<std::size_t>(static_cast<std::size_t>(std::max<long long>(0, bin)), assignment.size() - 1);
    const int layer = assignment[slot];

    auto weight_rng = stream(spec.seed, kElectrodeWeights, e);
    Eigen::VectorXd w = gaussian(static_cast<Eigen::Index>(spec.n_dims), 1, weight_rng);
    w.normalize();
    auto noise_rng = stream(spec.seed, kElectrodeNoise, e);
    const Eigen::VectorXd noise = gaussian(static_cast<Eigen::Index>(spec.n_words), 1, noise_rng);
    brain.responses.values.row(static_cast<Eigen::Index>(e)) =
        (teacher.layer_double(static_cast<std::size_t>(layer - 1)) * w + spec.noise_sigma * noise).transpose();

    auto lag_rng = stream(spec.seed, kLag, e);
    std::normal_distribution<double> jitter(0.0, 2.0);

    char id[32];
    std::snprintf(id, sizeof id, "e%03zu", e);
    io::ElectrodeMeta meta;
    meta.electrode_id = id;
    meta.subject_id = "s" + std::to_string(e % spec.n_subjects + 1);
    meta.dist_pmhg_mm = dist;
    meta.region = region_for(dist);
    meta.lag_ms = std::max(0.0, 50.0 + 4.0 * dist + jitter(lag_rng));
    meta.responsive = true;
    meta.t_value = 10.0;
    brain.responses.electrode_ids.push_back(meta.electrode_id);
    brain.electrodes.push_back(std::move(meta));
    brain.planted_layer.push_back(layer);
  }
  return brain;
}

io::EmbeddingTensor pseudo_model(const io::EmbeddingTensor& teacher, const std::string& model_id, double noise,
                                 std::uint64_t seed) {
  if (!(noise >= 0.0)) throw ValidationError("pseudo-model noise must be non-negative");
  auto out = empty_like(teacher, model_id);
  for (std::size_t l = 0; l < teacher.n_layers; ++l) {
    const Eigen::MatrixXd rot = random_orthogonal(teacher.n_dims, seed * 1000003ULL + kModelRotation * 7919ULL + l);
    auto rng = stream(seed, kModelNoise, l);
    const Eigen::MatrixXd z = gaussian(static_cast<Eigen::Index>(teacher.n_words), static_cast<Eigen::Index>(teacher.n_dims), rng);
    store_layer(out, l, teacher.layer_double(l) * rot + noise * z);
  }
  return out;
}

io::EmbeddingTensor shift_layers(const io::EmbeddingTensor& t, int shift, const std::string& model_id) {
  auto out = empty_like(t, model_id);
  const auto L = static_cast<long long>(t.n_layers);
  const std::size_t slab = t.n_words * t.n_dims;
  for (long long j = 0; j < L; ++j) {
    const long long src = ((j - shift) % L + L) % L;
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(src) * slab), slab,
                out.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * slab));
  }
  return out;
}

io::EmbeddingTensor context_variant(const io::EmbeddingTensor& full, io::ContextWindow window, double context_reliance,
                                    std::uint64_t seed) {
  if (!(context_reliance >= 0.0 && context_reliance <= 1.0)) throw ValidationError("context reliance must lie in [0, 1]");
  auto out = full;
  out.context_window = window;
  if (window.is_full()) return out;

  constexpr double kHalfContext = 10.0; // window at which half the context-borne signal is lost
  const double missing = kHalfContext / (static_cast<double>(window.tokens()) + kHalfContext);
  for (std::size_t l = 1; l < full.n_layers; ++l) {
    const double depth = static_cast<double>(l) / static_cast<double>(full.n_layers - 1);
    const double lost = context_reliance * depth * missing;
    auto rng = stream(seed, kContextNoise, l);
    const Eigen::MatrixXd z = gaussian(static_cast<Eigen::Index>(full.n_words), static_cast<Eigen::Index>(full.n_dims), rng);
    store_layer(out, l, std::sqrt(1.0 - lost) * full.layer_double(l) + std::sqrt(lost) * z);
  }
  return out;
}

} // namespace neuroalign::synth
