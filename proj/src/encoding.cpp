#include "neuroalign/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/SVD>

#include "neuroalign/parallel.hpp"

namespace neuroalign::encoding {

PcaModel fit_pca(ConstMatrixRef x, std::size_t k) {
  const auto n = x.rows(), d = x.cols();
  if (n < 2) throw ValidationError("PCA needs at least 2 rows");
  if (k == 0) throw ValidationError("PCA needs k >= 1");
  const auto k_eff = std::min<Eigen::Index>({static_cast<Eigen::Index>(k), n - 1, d});

  PcaModel model;
  model.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - model.mean;
  if (centered.squaredNorm() == 0.0) throw Error("zero variance");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  model.components = svd.matrixV().leftCols(k_eff).transpose();
  model.explained_variance = svd.singularValues().head(k_eff).array().square() / static_cast<double>(n - 1);
  for (Eigen::Index c = 0; c < k_eff; ++c) {
    Eigen::Index arg = 0;
    model.components.row(c).cwiseAbs().maxCoeff(&arg);
    if (model.components(c, arg) < 0.0) model.components.row(c) *= -1.0;
  }
  return model;
}

EncodingResult encode_model(const io::EmbeddingTensor& t, const io::ResponseMatrix& r, const EncodeOptions& opts) {
  if (t.word_ids != r.word_ids) throw ValidationError("tensor and responses are not word-aligned");
  EncodingResult out;
  out.model_id = t.model_id;
  out.context_window = t.context_window;
  out.electrode_ids = r.electrode_ids;
  out.scores.resize(r.values.rows(), static_cast<Eigen::Index>(t.n_layers));

  const Eigen::MatrixXd targets = r.values.transpose(); // words x electrodes
  parallel_for(t.n_layers, opts.jobs, [&](std::size_t layer) {
    Eigen::MatrixXd features = t.layer_double(layer);
    if (opts.pca_k > 0) features = fit_pca(features, opts.pca_k).transform(features);
    const auto scores = ridge_cv_scores(features, targets, opts.ridge);
    for (std::size_t e = 0; e < scores.size(); ++e)
      out.scores(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(layer)) = scores[e].score;
  });
  return out;
}

std::optional<ElectrodePeak> peak_of(ConstVectorRef layer_scores) {
  std::optional<ElectrodePeak> best;
  for (Eigen::Index l = 0; l < layer_scores.size(); ++l) {
    const double v = layer_scores[l];
    if (std::isnan(v)) continue;
    if (!best || v > best->peak_score) best = ElectrodePeak{0, v, static_cast<int>(l + 1)};
  }
  return best;
}

PeakStats peak_stats(const EncodingResult& e) {
  PeakStats out;
  for (Eigen::Index i = 0; i < e.scores.rows(); ++i) {
    auto peak = peak_of(e.scores.row(i).transpose());
    if (!peak) {
      out.excluded.push_back(static_cast<std::size_t>(i));
      continue;
    }
    peak->electrode = static_cast<std::size_t>(i);
    out.peaks.push_back(*peak);
  }
  return out;
}

SlidingCurve sliding_peak_layer(ConstVectorRef peak_layers, ConstVectorRef dist, std::size_t window_n) {
  if (peak_layers.size() != dist.size()) throw ValidationError("peak layers and distances differ in length");
  const auto n = static_cast<std::size_t>(dist.size());
  if (n < 2) throw ValidationError("sliding average needs at least 2 electrodes");
  if (window_n < 1 || window_n > n) throw ValidationError("window larger than electrode count");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

  Eigen::VectorXd sorted_layers(static_cast<Eigen::Index>(n));
  SlidingCurve curve;
  curve.dist.resize(static_cast<Eigen::Index>(n));
  curve.layer.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    sorted_layers[static_cast<Eigen::Index>(i)] = peak_layers[order[i]];
    curve.dist[static_cast<Eigen::Index>(i)] = dist[order[i]];
  }

  // Full window spans [i - before, i + after]; even widths lean left.
  const std::size_t before = window_n / 2;
  const std::size_t after = window_n - 1 - before;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo, hi;
    if (i >= before && i + after < n) {
      lo = i - before;
      hi = i + after;
    } else {
      const std::size_t radius = std::min({i, n - 1 - i, after});
      lo = i - radius;
      hi = i + radius;
    }
    curve.layer[static_cast<Eigen::Index>(i)] =
        sorted_layers.segment(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo + 1)).mean();
  }
  return curve;
}

Eigen::VectorXd context_effect(std::span<const EncodingResult> full, std::span<const EncodingResult> limited) {
  if (full.size() != limited.size() || full.empty()) throw ValidationError("model sets differ");
  std::map<std::string, const EncodingResult*> by_model;
  for (const auto& e : limited) by_model.emplace(e.model_id, &e);

  const auto& electrodes = full.front().electrode_ids;
  const auto n = static_cast<Eigen::Index>(electrodes.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(n);
  for (const auto& f : full) {
    auto it = by_model.find(f.model_id);
    if (it == by_model.end()) throw ValidationError("model set mismatch: " + f.model_id + " has no limited-context result");
    const auto& l = *it->second;
    if (f.electrode_ids != electrodes || l.electrode_ids != electrodes)
      throw ValidationError("electrode sets differ between encoding results");
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto pf = peak_of(f.scores.row(e).transpose());
      const auto pl = peak_of(l.scores.row(e).transpose());
      if (!pf || !pl) continue;
      sum[e] += pf->peak_score - pl->peak_score;
      ++count[e];
    }
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index e = 0; e < n; ++e)
    out[e] = count[e] == 0 ? std::numeric_limits<double>::quiet_NaN() : sum[e] / count[e];
  return out;
}

} // namespace neuroalign::encoding
