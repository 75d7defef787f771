#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neuroalign/io.hpp"
#include "neuroalign/similarity.hpp"

namespace neuroalign::pipeline {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct PreprocessConfig {
  fs::path traces_dir; // <electrode_id>.nmt, shape (1, n_samples, 1)
  fs::path word_timings;
  double fs_hz = 0.0; // raw sampling rate; NMT1 headers do not carry one
  double band_lo_hz = 70.0;
  double band_hi_hz = 150.0;
  double envelope_fs_hz = 100.0;
  double alpha = 0.05;
};

struct HierarchyConfig {
  std::optional<double> max_distance_mm;
  double min_com_spread = 1.0;
  std::size_t bootstrap_resamples = 1000;
};

struct SynthConfig {
  std::size_t n_layers = 32;
  std::size_t n_words = 2000;
  std::size_t n_dims = 128;
  std::size_t n_electrodes = 200;
  std::size_t n_subjects = 8;
  std::vector<int> layer_assignment;
  double noise_sigma = 1.0;
  std::vector<double> model_noise = {0.25, 1.0, 2.0}; // one pseudo-model per entry, best first
  std::optional<int> shift; // adds a layer-shifted copy of the best model
  double context_reliance = 0.8;
};

struct PipelineConfig {
  fs::path base_dir; // relative paths resolve against this
  fs::path tensors_dir;
  fs::path responses;
  fs::path electrodes;
  fs::path benchmarks; // optional
  fs::path output_dir = "results";
  std::vector<std::string> models; // empty: every model directory found
  std::size_t pca_k = 500;
  double window_ms = 100.0;
  std::size_t n_folds = 10;
  std::vector<double> lambdas;
  double bin_width_mm = 10.0;
  double bin_width_ms = 40.0;
  std::vector<io::ContextWindow> context_windows;
  similarity::KernelSettings kernel;
  std::size_t max_words = 2000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  PreprocessConfig preprocess;
  HierarchyConfig hierarchy;
  SynthConfig synth;

  fs::path resolve(const fs::path& p) const;
  fs::path out() const { return resolve(output_dir); }
  /// Every setting that can change a result; paths as written.
  Json to_json() const;
};

PipelineConfig default_config();
PipelineConfig config_from_json(const Json& j, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

/// Resolved config plus content hashes of the named inputs.
Json provenance(const PipelineConfig& cfg, const std::vector<std::pair<std::string, fs::path>>& inputs);

void write_json(const Json& j, const fs::path& path);
void warn(const std::string& message);

/// <tensors_dir>/<model>/ctx_<label>.nmt
fs::path tensor_path(const PipelineConfig& cfg, const std::string& model, io::ContextWindow window);
/// Models to analyse: the config list, or every tensor directory, sorted.
std::vector<std::string> discover_models(const PipelineConfig& cfg);

int cmd_preprocess(const PipelineConfig& cfg);
int cmd_encode(const PipelineConfig& cfg);
int cmd_hierarchy(const PipelineConfig& cfg);
int cmd_cka(const PipelineConfig& cfg);
int cmd_context(const PipelineConfig& cfg);
int cmd_report(const PipelineConfig& cfg);
/// Writes a complete synthetic study under `out`, including a config.json
/// that the other commands accept as is.
int cmd_synth(const PipelineConfig& cfg, const fs::path& out);

} // namespace neuroalign::pipeline
