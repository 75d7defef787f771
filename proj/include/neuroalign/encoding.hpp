#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/io.hpp"
#include "neuroalign/ridge.hpp"

namespace neuroalign::encoding {

struct PcaModel {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components; // k x n_dims, orthonormal rows
  Eigen::VectorXd explained_variance;

  Eigen::MatrixXd transform(ConstMatrixRef x) const { return (x.rowwise() - mean) * components.transpose(); }
  Eigen::MatrixXd inverse_transform(ConstMatrixRef z) const { return (z * components).rowwise() + mean; }
};

/// Top-k principal axes of the mean-centered rows. k is clamped to
/// min(n_rows - 1, n_cols). Each axis is sign-fixed so its largest-magnitude
/// loading is positive.
PcaModel fit_pca(ConstMatrixRef words_by_dims, std::size_t k = 500);

/// Held-out prediction correlation per (electrode, layer); NaN marks cells
/// where every fold was invalid.
struct EncodingResult {
  std::string model_id;
  io::ContextWindow context_window;
  std::vector<std::string> electrode_ids;
  Eigen::MatrixXd scores; // electrodes x layers

  std::size_t invalid_cells() const { return static_cast<std::size_t>(scores.array().isNaN().count()); }
};

struct EncodeOptions {
  std::size_t pca_k = 500; // 0 disables PCA
  RidgeOptions ridge;
  std::size_t jobs = 1;
};

EncodingResult encode_model(const io::EmbeddingTensor& t, const io::ResponseMatrix& r, const EncodeOptions& opts = {});

struct ElectrodePeak {
  std::size_t electrode = 0; // row in the EncodingResult
  double peak_score = 0.0;
  int peak_layer = 0; // 1-based
};

struct PeakStats {
  std::vector<ElectrodePeak> peaks;
  std::vector<std::size_t> excluded; // electrodes with no valid layer
};

/// Argmax over valid layers; ties go to the lowest layer.
PeakStats peak_stats(const EncodingResult& e);

/// Peak of one electrode's layer scores, or nullopt when all are NaN.
std::optional<ElectrodePeak> peak_of(ConstVectorRef layer_scores);

struct SlidingCurve {
  Eigen::VectorXd dist;
  Eigen::VectorXd layer;
};

/// Centered moving average of peak layers over electrodes sorted by distance.
/// Near the ends the window shrinks to stay symmetric about the electrode.
SlidingCurve sliding_peak_layer(ConstVectorRef peak_layers, ConstVectorRef dist, std::size_t window_n = 50);

/// Per electrode, mean over models of (full-context peak - limited-context peak).
/// Models are matched by id; NaN where no model has both peaks.
Eigen::VectorXd context_effect(std::span<const EncodingResult> full, std::span<const EncodingResult> limited);

} // namespace neuroalign::encoding
