#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/dsp.hpp"
#include "neuroalign/encoding.hpp"
#include "neuroalign/io.hpp"
#include "neuroalign/stats.hpp"

namespace neuroalign::hierarchy {

using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

enum class Axis { DistPmhg, Lag };

std::string_view to_string(Axis axis);

struct Bin {
  double lower = 0.0; // inclusive
  double upper = 0.0; // exclusive
  std::vector<std::string> members;
};

struct HierarchyBinning {
  Axis axis = Axis::DistPmhg;
  double bin_width = 10.0;
  std::vector<Bin> bins;
  std::vector<double> bin_centers;
  std::vector<std::string> excluded; // electrodes without a value on the axis
};

/// Half-open bins [k w, (k+1) w); empty bins are dropped. Electrodes at or
/// beyond max_value (when given) are excluded.
HierarchyBinning bin_electrodes(std::span<const io::ElectrodeMeta> meta, Axis axis, double bin_width,
                                std::optional<double> max_value = std::nullopt);

/// Min-max scaling of finite entries to [0, 1]; NaN entries stay NaN.
/// nullopt when fewer than two distinct finite values exist.
std::optional<Eigen::VectorXd> normalize_layer_scores(ConstVectorRef scores);

struct BinProfile {
  Eigen::MatrixXd profile; // kept bins x layers
  std::vector<double> positions;
  std::vector<std::size_t> member_counts;
  std::vector<std::size_t> kept_bins;          // indices into binning.bins
  std::vector<std::size_t> dropped_bins;       // emptied by exclusions
  std::vector<std::string> excluded_electrodes; // constant or missing score vectors
};

/// Per bin, the layerwise mean of member electrodes' normalized scores.
BinProfile bin_profile(const HierarchyBinning& binning, const encoding::EncodingResult& encoding);

/// sum(i * w_i) / sum(w_i) with layers numbered from 1. Throws on zero mass.
double center_of_mass(ConstVectorRef profile);

/// Pearson r and p between bin positions and per-bin centers of mass.
/// Needs at least 3 bins. Throws Error("zero variance") on a flat trace.
stats::CorrelationResult hierarchy_alignment(ConstVectorRef coms, ConstVectorRef positions);

struct AlignmentReport {
  std::string model_id;
  Axis axis = Axis::DistPmhg;
  std::vector<double> per_bin_com;
  std::vector<double> bin_positions;
  std::vector<std::size_t> bin_counts;
  double alignment_r = std::numeric_limits<double>::quiet_NaN();
  double alignment_p = std::numeric_limits<double>::quiet_NaN();
  std::optional<std::string> degenerate; // reason, when alignment is undefined
  Eigen::MatrixXd profile;
  std::size_t excluded_electrodes = 0;
  std::size_t dropped_bins = 0;
};

struct AlignmentOptions {
  Axis axis = Axis::DistPmhg;
  double bin_width = 10.0;
  std::optional<double> max_value;
  /// Traces whose centers of mass span fewer layers than this carry no
  /// resolvable gradient and are reported as degenerate.
  double min_com_spread = 1.0;
};

/// Binning, profiles, centers of mass and alignment for one model.
/// Undefined alignments are reported through `degenerate` instead of throwing.
AlignmentReport align_hierarchy(std::span<const io::ElectrodeMeta> meta, const encoding::EncodingResult& encoding,
                                const AlignmentOptions& opts);

/// Lag (ms) of the largest-magnitude coefficient of a ridge temporal response
/// filter over lags 0..max_lag_ms. Lambda chosen by leave-one-out error on the
/// whole trace.
double trf_peak_lag(const dsp::RecordingTrace& stimulus_envelope, const dsp::RecordingTrace& response,
                    double max_lag_ms = 400.0);

} // namespace neuroalign::hierarchy
