#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/error.hpp"

namespace neuroalign::io {

using WordId = std::int64_t;
using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Number of preceding tokens a model saw, or the whole passage.
class ContextWindow {
public:
  constexpr ContextWindow() = default;
  constexpr explicit ContextWindow(int tokens) : tokens_(tokens) {}

  static constexpr ContextWindow full() { return ContextWindow{}; }

  constexpr bool is_full() const { return tokens_ == 0; }
  constexpr int tokens() const { return tokens_; }

  /// "full" or the decimal token count.
  std::string label() const;
  static ContextWindow parse(std::string_view text);

  friend constexpr bool operator==(ContextWindow, ContextWindow) = default;
  friend constexpr auto operator<=>(ContextWindow a, ContextWindow b) {
    // FULL sorts after every finite window
    auto key = [](ContextWindow w) { return w.is_full() ? INT32_MAX : w.tokens_; };
    return key(a) <=> key(b);
  }

private:
  int tokens_ = 0; // 0 encodes FULL
};

/// Per-layer word embeddings of one model, stored (layer, word, dim) row-major.
struct EmbeddingTensor {
  std::string model_id;
  ContextWindow context_window;
  std::size_t n_layers = 0;
  std::size_t n_words = 0;
  std::size_t n_dims = 0;
  std::vector<float> data;
  std::vector<WordId> word_ids;

  using LayerMap = Eigen::Map<const RowMatrixXf>;

  /// Zero-based layer view, n_words x n_dims.
  LayerMap layer(std::size_t index) const;
  Eigen::MatrixXd layer_double(std::size_t index) const { return layer(index).cast<double>(); }

  /// Throws ValidationError when a structural invariant is broken.
  void validate() const;
};

/// Averaged word responses, electrodes on rows and words on columns.
struct ResponseMatrix {
  Eigen::MatrixXd values;
  std::vector<WordId> word_ids;
  std::vector<std::string> electrode_ids;

  void validate() const;
};

enum class Region { HG, STG, IFG, Subcentral, Other };

std::string_view to_string(Region r);
Region parse_region(std::string_view text);

struct ElectrodeMeta {
  std::string electrode_id;
  std::string subject_id;
  double dist_pmhg_mm = 0.0;
  Region region = Region::Other;
  std::optional<double> lag_ms;
  bool responsive = false;
  double t_value = 0.0;
};

struct BenchmarkScores {
  std::string model_id;
  double reading_comprehension = 0.0;
  double commonsense_reasoning = 0.0;
  double llm_performance = 0.0;
};

struct WordTiming {
  WordId word_id = 0;
  double center_s = 0.0;
  std::int64_t passage_id = 0;
  double passage_onset_s = 0.0;
  double preceding_silence_end_s = 0.0;
};

// NMT1: one JSON header line, then little-endian float32 payload.
void write_tensor(const EmbeddingTensor& t, const std::filesystem::path& path);
EmbeddingTensor read_tensor(const std::filesystem::path& path);

/// Overall LLM performance: mean of the two benchmark categories.
double aggregate_benchmarks(double reading_comprehension, double commonsense_reasoning);

/// Restricts both inputs to their shared word ids, ascending.
std::pair<EmbeddingTensor, ResponseMatrix> align_words(const EmbeddingTensor& t, const ResponseMatrix& r);

/// Tensor restricted to the given word ids (which must all be present).
EmbeddingTensor select_words(const EmbeddingTensor& t, const std::vector<WordId>& ids);

std::vector<ElectrodeMeta> read_electrodes(const std::filesystem::path& path);
void write_electrodes(const std::vector<ElectrodeMeta>& meta, const std::filesystem::path& path);

std::vector<BenchmarkScores> read_benchmarks(const std::filesystem::path& path);
void write_benchmarks(const std::vector<BenchmarkScores>& scores, const std::filesystem::path& path);

// Wide CSV: electrode_id followed by one column per word id.
ResponseMatrix read_responses(const std::filesystem::path& path);
void write_responses(const ResponseMatrix& r, const std::filesystem::path& path);

std::vector<WordTiming> read_word_timings(const std::filesystem::path& path);
void write_word_timings(const std::vector<WordTiming>& words, const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

} // namespace neuroalign::io
