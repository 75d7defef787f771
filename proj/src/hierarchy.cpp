#include "neuroalign/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "neuroalign/ridge.hpp"

namespace neuroalign::hierarchy {

std::string_view to_string(Axis axis) { return axis == Axis::DistPmhg ? "dist_pmhg" : "lag"; }

HierarchyBinning bin_electrodes(std::span<const io::ElectrodeMeta> meta, Axis axis, double bin_width,
                                std::optional<double> max_value) {
  if (!(bin_width > 0.0)) throw ValidationError("bin width must be positive");
  HierarchyBinning out;
  out.axis = axis;
  out.bin_width = bin_width;

  std::map<long long, std::vector<std::string>> members;
  for (const auto& m : meta) {
    std::optional<double> value;
    if (axis == Axis::DistPmhg)
      value = m.dist_pmhg_mm;
    else
      value = m.lag_ms;
    if (!value || !std::isfinite(*value) || *value < 0.0 || (max_value && *value >= *max_value)) {
      out.excluded.push_back(m.electrode_id);
      continue;
    }
    members[static_cast<long long>(std::floor(*value / bin_width))].push_back(m.electrode_id);
  }
  for (auto& [k, ids] : members) {
    const double lower = static_cast<double>(k) * bin_width;
    out.bins.push_back({lower, lower + bin_width, std::move(ids)});
    out.bin_centers.push_back(lower + bin_width / 2.0);
  }
  return out;
}

std::optional<Eigen::VectorXd> normalize_layer_scores(ConstVectorRef scores) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) continue;
    lo = std::min(lo, scores[i]);
    hi = std::max(hi, scores[i]);
  }
  if (!(hi > lo)) return std::nullopt;
  Eigen::VectorXd out(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    out[i] = std::isfinite(scores[i]) ? (scores[i] - lo) / (hi - lo) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

BinProfile bin_profile(const HierarchyBinning& binning, const encoding::EncodingResult& encoding) {
  std::unordered_map<std::string, Eigen::Index> row;
  for (std::size_t i = 0; i < encoding.electrode_ids.size(); ++i)
    row.emplace(encoding.electrode_ids[i], static_cast<Eigen::Index>(i));
  const auto n_layers = encoding.scores.cols();

  BinProfile out;
  std::vector<Eigen::VectorXd> rows;
  for (std::size_t b = 0; b < binning.bins.size(); ++b) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_layers);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(n_layers);
    std::size_t used = 0;
    for (const auto& id : binning.bins[b].members) {
      auto it = row.find(id);
      std::optional<Eigen::VectorXd> normalized;
      if (it != row.end()) normalized = normalize_layer_scores(encoding.scores.row(it->second).transpose());
      if (!normalized) {
        out.excluded_electrodes.push_back(id);
        continue;
      }
      for (Eigen::Index l = 0; l < n_layers; ++l) {
        if (std::isnan((*normalized)[l])) continue;
        sum[l] += (*normalized)[l];
        count[l] += 1.0;
      }
      ++used;
    }
    if (used == 0 || (count.array() == 0.0).any()) {
      out.dropped_bins.push_back(b);
      continue;
    }
    rows.push_back(sum.cwiseQuotient(count));
    out.positions.push_back(binning.bin_centers[b]);
    out.member_counts.push_back(used);
    out.kept_bins.push_back(b);
  }
  out.profile.resize(static_cast<Eigen::Index>(rows.size()), n_layers);
  for (std::size_t i = 0; i < rows.size(); ++i) out.profile.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return out;
}

double center_of_mass(ConstVectorRef profile) {
  if ((profile.array() < 0.0).any() || !profile.allFinite()) throw ValidationError("profile must be finite and non-negative");
  const double mass = profile.sum();
  if (!(mass > 0.0)) throw Error("center of mass of an all-zero profile");
  const Eigen::VectorXd index = Eigen::VectorXd::LinSpaced(profile.size(), 1.0, static_cast<double>(profile.size()));
  return index.dot(profile) / mass;
}

stats::CorrelationResult hierarchy_alignment(ConstVectorRef coms, ConstVectorRef positions) {
  if (coms.size() != positions.size()) throw ValidationError("coms and positions differ in length");
  if (coms.size() < 3) throw ValidationError("hierarchy alignment needs at least 3 bins");
  if (positions.maxCoeff() == positions.minCoeff()) throw ValidationError("bin positions are constant");
  return stats::pearson(positions, coms);
}

AlignmentReport align_hierarchy(std::span<const io::ElectrodeMeta> meta, const encoding::EncodingResult& encoding,
                                const AlignmentOptions& opts) {
  AlignmentReport report;
  report.model_id = encoding.model_id;
  report.axis = opts.axis;

  const auto binning = bin_electrodes(meta, opts.axis, opts.bin_width, opts.max_value);
  const auto profile = bin_profile(binning, encoding);
  report.profile = profile.profile;
  report.bin_positions = profile.positions;
  report.bin_counts = profile.member_counts;
  report.excluded_electrodes = profile.excluded_electrodes.size() + binning.excluded.size();
  report.dropped_bins = profile.dropped_bins.size();
  for (Eigen::Index b = 0; b < profile.profile.rows(); ++b)
    report.per_bin_com.push_back(center_of_mass(profile.profile.row(b).transpose()));

  if (report.per_bin_com.size() < 3) {
    report.degenerate = "fewer than 3 bins";
    return report;
  }
  const Eigen::Map<const Eigen::VectorXd> coms(report.per_bin_com.data(), static_cast<Eigen::Index>(report.per_bin_com.size()));
  const Eigen::Map<const Eigen::VectorXd> pos(report.bin_positions.data(), static_cast<Eigen::Index>(report.bin_positions.size()));
  try {
    const auto c = hierarchy_alignment(coms, pos);
    report.alignment_r = c.r;
    report.alignment_p = c.p;
  } catch (const Error& e) {
    report.degenerate = e.what();
    return report;
  }
  if (coms.maxCoeff() - coms.minCoeff() < opts.min_com_spread) report.degenerate = "zero variance";
  return report;
}

double trf_peak_lag(const dsp::RecordingTrace& stimulus, const dsp::RecordingTrace& response, double max_lag_ms) {
  if (stimulus.fs_hz != response.fs_hz) throw ValidationError("stimulus and response sampling rates differ");
  if (stimulus.samples.size() != response.samples.size()) throw ValidationError("stimulus and response lengths differ");
  const double fs = stimulus.fs_hz;
  const auto max_lag = static_cast<Eigen::Index>(std::floor(max_lag_ms * fs / 1000.0 + 1e-9));
  if (max_lag < 1) throw ValidationError("max lag must cover at least one sample");
  const auto n = stimulus.samples.size();
  if (n <= max_lag + 2) throw ValidationError("trace shorter than the lag window");
  if (response.samples.maxCoeff() == response.samples.minCoeff()) throw Error("constant response");

  Eigen::MatrixXd lagged = Eigen::MatrixXd::Zero(n, max_lag + 1);
  for (Eigen::Index lag = 0; lag <= max_lag; ++lag) lagged.col(lag).tail(n - lag) = stimulus.samples.head(n - lag);

  const auto fit = encoding::fit_ridge_gcv(lagged, response.samples, encoding::default_lambda_grid());
  Eigen::Index peak = 0;
  fit.coef.col(0).cwiseAbs().maxCoeff(&peak);
  return static_cast<double>(peak) * 1000.0 / fs;
}

} // namespace neuroalign::hierarchy
