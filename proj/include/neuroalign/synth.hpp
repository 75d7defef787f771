#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/io.hpp"

namespace neuroalign::synth {

/// Ground-truth plant: which teacher layer drives electrodes in each distance bin.
struct PlantSpec {
  std::size_t n_layers = 32;
  std::size_t n_words = 2000;
  std::size_t n_dims = 128;
  std::size_t n_electrodes = 200;
  std::size_t n_subjects = 8;
  std::vector<int> layer_assignment; // bin index -> 1-based layer; empty means default_assignment()
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double dist_lo_mm = 0.0;
  double dist_hi_mm = 60.0;
  double bin_width_mm = 10.0;
  double mixing_rate = 0.7;
  bool monotone = true;

  std::size_t n_bins() const;
  /// Evenly spread from layer 3 to n_layers - 2 across the bins.
  std::vector<int> default_assignment() const;
  std::vector<int> resolved_assignment() const;
  void validate() const;
};

/// Haar-random orthogonal matrix (QR of a Gaussian with sign-fixed R).
Eigen::MatrixXd random_orthogonal(std::size_t n, std::uint64_t seed);

/// Layer 1 i.i.d. standard normal; each next layer mixes an orthogonal rotation
/// of the previous one with fresh noise at rate rho, keeping unit variance.
io::EmbeddingTensor generate_teacher(const PlantSpec& spec);

struct Brain {
  io::ResponseMatrix responses;
  std::vector<io::ElectrodeMeta> electrodes;
  std::vector<int> planted_layer; // per electrode, 1-based
};

/// Electrode in bin b responds as w . (teacher layer assignment[b]) + noise,
/// w a random unit vector.
Brain generate_brain(const PlantSpec& spec, const io::EmbeddingTensor& teacher);

/// Teacher seen through a per-layer random rotation plus isotropic noise;
/// more noise means a weaker pseudo-model.
io::EmbeddingTensor pseudo_model(const io::EmbeddingTensor& teacher, const std::string& model_id, double noise,
                                 std::uint64_t seed);

/// Layer j of the result is layer (j - shift) mod L of the input.
io::EmbeddingTensor shift_layers(const io::EmbeddingTensor& t, int shift, const std::string& model_id);

/// Limited-context variant: deeper layers lose a growing share of their
/// signal as the window shrinks. Layer 1 is unchanged; FULL returns the input.
io::EmbeddingTensor context_variant(const io::EmbeddingTensor& full, io::ContextWindow window, double context_reliance,
                                    std::uint64_t seed);

} // namespace neuroalign::synth
