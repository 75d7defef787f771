#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "neuroalign/dsp.hpp"
#include "neuroalign/encoding.hpp"
#include "neuroalign/error.hpp"
#include "neuroalign/hierarchy.hpp"
#include "neuroalign/parallel.hpp"
#include "neuroalign/pipeline.hpp"
#include "neuroalign/similarity.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synth.hpp"

namespace neuroalign::pipeline {

namespace {

using Eigen::VectorXd;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

fs::path require_file(const PipelineConfig& cfg, const fs::path& p, const char* what) {
  if (p.empty()) throw ValidationError(std::string(what) + " is not configured");
  const fs::path full = cfg.resolve(p);
  if (!fs::is_regular_file(full)) throw ValidationError(std::string(what) + " not found: " + full.string());
  return full;
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json correlation_json(const stats::CorrelationResult& c) {
  return {{"r", number(c.r)}, {"p", number(c.p)}, {"n", c.n}, {"stars", stats::significance_stars(c.p)}};
}

VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Responses restricted to responsive electrodes that appear in the metadata,
// with the metadata in the same order as the response rows.
struct Study {
  io::ResponseMatrix responses;
  std::vector<io::ElectrodeMeta> meta;
  std::map<std::string, double> performance;
  std::vector<std::pair<std::string, fs::path>> inputs;
};

Study load_study(const PipelineConfig& cfg) {
  Study s;
  const auto responses_path = require_file(cfg, cfg.responses, "responses");
  const auto electrodes_path = require_file(cfg, cfg.electrodes, "electrodes");
  s.inputs = {{"responses", responses_path}, {"electrodes", electrodes_path}};
  const auto all = io::read_responses(responses_path);
  const auto meta = io::read_electrodes(electrodes_path);
  std::unordered_map<std::string, const io::ElectrodeMeta*> by_id;
  for (const auto& m : meta) by_id.emplace(m.electrode_id, &m);

  std::vector<Eigen::Index> keep;
  std::size_t missing = 0, silent = 0;
  for (std::size_t i = 0; i < all.electrode_ids.size(); ++i) {
    auto it = by_id.find(all.electrode_ids[i]);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    if (!it->second->responsive) {
      ++silent;
      continue;
    }
    keep.push_back(static_cast<Eigen::Index>(i));
    s.meta.push_back(*it->second);
  }
  if (missing) warn(std::to_string(missing) + " response rows have no electrode metadata and are skipped");
  if (silent) warn(std::to_string(silent) + " non-responsive electrodes are skipped");
  if (keep.empty()) throw ValidationError("no responsive electrodes with metadata");
  s.responses.word_ids = all.word_ids;
  s.responses.values = all.values(keep, Eigen::all);
  for (auto i : keep) s.responses.electrode_ids.push_back(all.electrode_ids[static_cast<std::size_t>(i)]);

  if (!cfg.benchmarks.empty()) {
    const auto bench_path = require_file(cfg, cfg.benchmarks, "benchmarks");
    s.inputs.emplace_back("benchmarks", bench_path);
    for (const auto& b : io::read_benchmarks(bench_path)) s.performance[b.model_id] = b.llm_performance;
  }
  return s;
}

std::optional<double> performance_of(const Study& s, const std::string& model) {
  auto it = s.performance.find(model);
  if (it == s.performance.end()) return std::nullopt;
  return it->second;
}

fs::path encoding_path(const PipelineConfig& cfg, const std::string& model, io::ContextWindow w) {
  return cfg.out() / "encode" / model / ("ctx_" + w.label() + ".csv");
}

void write_encoding(const encoding::EncodingResult& e, const fs::path& path) {
  std::string out = "electrode_id,layer,score\n";
  for (Eigen::Index i = 0; i < e.scores.rows(); ++i)
    for (Eigen::Index l = 0; l < e.scores.cols(); ++l)
      out += e.electrode_ids[static_cast<std::size_t>(i)] + "," + std::to_string(l + 1) + "," +
             io::format_double(e.scores(i, l)) + "\n";
  fs::create_directories(path.parent_path());
  io::write_file_atomic(path, out);
}

encoding::EncodingResult read_encoding(const fs::path& path, const std::string& model, io::ContextWindow w) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "electrode_id,layer,score") throw ValidationError("bad encoding CSV header in " + path.string());
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw ValidationError("bad encoding CSV row in " + path.string());
    const std::string id = line.substr(0, c1);
    const auto layer = static_cast<std::size_t>(std::stoul(line.substr(c1 + 1, c2 - c1 - 1)));
    const std::string cell = line.substr(c2 + 1);
    const double v = cell == "nan" ? kNaN : std::stod(cell);
    if (ids.empty() || ids.back() != id) {
      ids.push_back(id);
      rows.emplace_back();
    }
    if (layer != rows.back().size() + 1) throw ValidationError("encoding CSV layers out of order in " + path.string());
    rows.back().push_back(v);
  }
  encoding::EncodingResult e;
  e.model_id = model;
  e.context_window = w;
  e.electrode_ids = ids;
  if (rows.empty()) throw ValidationError("empty encoding CSV " + path.string());
  e.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ValidationError("ragged encoding CSV " + path.string());
    e.scores.row(static_cast<Eigen::Index>(i)) = to_vector(rows[i]).transpose();
  }
  return e;
}

// Everything an encoding result depends on; a cached CSV is reused only when
// its key matches.
std::string encoding_key(const PipelineConfig& cfg, const Study& s, const fs::path& tensor) {
  Json k;
  k["tensor"] = sha256_file(tensor);
  for (const auto& [name, path] : s.inputs)
    if (name != "benchmarks") k[name] = sha256_file(path);
  k["pca_k"] = cfg.pca_k;
  k["n_folds"] = cfg.n_folds;
  k["lambdas"] = cfg.lambdas;
  return k.dump();
}

encoding::EncodingResult compute_encoding(const PipelineConfig& cfg, const Study& s, const std::string& model,
                                          io::ContextWindow w, bool reuse) {
  const fs::path tensor = tensor_path(cfg, model, w);
  if (!fs::is_regular_file(tensor)) throw ValidationError("tensor not found: " + tensor.string());
  const fs::path csv = encoding_path(cfg, model, w);
  fs::path key_file = csv;
  key_file += ".key";
  const std::string key = encoding_key(cfg, s, tensor);
  if (reuse && fs::exists(csv) && fs::exists(key_file) && io::read_file(key_file) == key) return read_encoding(csv, model, w);

  auto t = io::read_tensor(tensor);
  if (t.context_window != w) throw ValidationError(tensor.string() + " declares context window " + t.context_window.label());
  const auto [ta, ra] = io::align_words(t, s.responses);
  if (ta.n_words != t.n_words || ra.word_ids.size() != s.responses.word_ids.size())
    warn(model + " ctx " + w.label() + ": encoding on " + std::to_string(ta.n_words) + " shared words");
  encoding::EncodeOptions opts;
  opts.pca_k = cfg.pca_k;
  opts.ridge = {cfg.n_folds, cfg.lambdas};
  opts.jobs = cfg.jobs;
  auto e = encoding::encode_model(ta, ra, opts);
  e.model_id = model;
  if (auto bad = e.invalid_cells()) warn(model + " ctx " + w.label() + ": " + std::to_string(bad) + " invalid cells");
  write_encoding(e, csv);
  io::write_file_atomic(key_file, key);
  return e;
}

struct PeakSummary {
  double mean_score = kNaN;
  double mean_layer = kNaN;
  std::size_t n = 0;
  std::size_t excluded = 0;
};

PeakSummary summarize_peaks(const encoding::EncodingResult& e) {
  const auto ps = encoding::peak_stats(e);
  PeakSummary out;
  out.n = ps.peaks.size();
  out.excluded = ps.excluded.size();
  if (ps.peaks.empty()) return out;
  double score = 0, layer = 0;
  for (const auto& p : ps.peaks) {
    score += p.peak_score;
    layer += p.peak_layer;
  }
  out.mean_score = score / static_cast<double>(out.n);
  out.mean_layer = layer / static_cast<double>(out.n);
  return out;
}

// Correlation across models with a percentile bootstrap over models.
Json cross_model_correlation(const std::vector<double>& x, const std::vector<double>& y, const PipelineConfig& cfg,
                             const std::string& what, bool spearman = false) {
  if (x.size() < 3) {
    warn(what + ": fewer than 3 models, correlation omitted");
    return {{"omitted", "fewer than 3 models"}};
  }
  try {
    const VectorXd vx = to_vector(x), vy = to_vector(y);
    const auto c = spearman ? stats::spearman(vx, vy) : stats::pearson(vx, vy);
    Json j = correlation_json(c);
    j["method"] = spearman ? "spearman" : "pearson";
    try {
      auto stat = [spearman](const VectorXd& a, const VectorXd& b) {
        return spearman ? stats::spearman(a, b).r : stats::pearson_r(a, b);
      };
      auto safe = [&](const VectorXd& a, const VectorXd& b) {
        try {
          return stat(a, b);
        } catch (const Error&) {
          return kNaN;
        }
      };
      const auto ci = stats::bootstrap_ci(vx, vy, safe, {cfg.hierarchy.bootstrap_resamples, 0.95, cfg.seed});
      j["ci95"] = {number(ci.lo), number(ci.hi)};
    } catch (const Error& e) {
      j["ci95"] = nullptr;
      j["ci_note"] = e.what();
    }
    return j;
  } catch (const Error& e) {
    warn(what + ": " + e.what());
    return {{"omitted", e.what()}};
  }
}

hierarchy::AlignmentOptions alignment_options(const PipelineConfig& cfg, hierarchy::Axis axis) {
  hierarchy::AlignmentOptions o;
  o.axis = axis;
  o.bin_width = axis == hierarchy::Axis::DistPmhg ? cfg.bin_width_mm : cfg.bin_width_ms;
  if (axis == hierarchy::Axis::DistPmhg) o.max_value = cfg.hierarchy.max_distance_mm;
  o.min_com_spread = cfg.hierarchy.min_com_spread;
  return o;
}

Json alignment_json(const hierarchy::AlignmentReport& r) {
  Json j;
  j["axis"] = std::string(hierarchy::to_string(r.axis));
  j["alignment_r"] = number(r.alignment_r);
  j["alignment_p"] = number(r.alignment_p);
  j["degenerate"] = r.degenerate ? Json(*r.degenerate) : Json(nullptr);
  j["bin_positions"] = r.bin_positions;
  j["bin_counts"] = r.bin_counts;
  j["per_bin_com"] = r.per_bin_com;
  j["excluded_electrodes"] = r.excluded_electrodes;
  j["dropped_bins"] = r.dropped_bins;
  return j;
}

void write_profile(const hierarchy::AlignmentReport& r, const fs::path& path) {
  std::string out = "bin_position,layer,value\n";
  for (Eigen::Index b = 0; b < r.profile.rows(); ++b)
    for (Eigen::Index l = 0; l < r.profile.cols(); ++l)
      out += io::format_double(r.bin_positions[static_cast<std::size_t>(b)]) + "," + std::to_string(l + 1) + "," +
             io::format_double(r.profile(b, l)) + "\n";
  fs::create_directories(path.parent_path());
  io::write_file_atomic(path, out);
}

std::vector<io::ContextWindow> available_windows(const PipelineConfig& cfg, const std::vector<std::string>& models) {
  std::vector<io::ContextWindow> out;
  for (auto w : cfg.context_windows) {
    bool any = false;
    for (const auto& m : models) any = any || fs::is_regular_file(tensor_path(cfg, m, w));
    if (any)
      out.push_back(w);
    else
      warn("context window " + w.label() + " has no tensors and is skipped");
  }
  return out;
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += io::format_double(m(i, j));
    }
    out += "\n";
  }
  return out;
}

} // namespace

int cmd_preprocess(const PipelineConfig& cfg) {
  const auto& p = cfg.preprocess;
  if (!(p.fs_hz > 0.0)) throw ValidationError("preprocess.fs_hz must be set to the raw sampling rate");
  const fs::path traces = cfg.resolve(p.traces_dir);
  if (!fs::is_directory(traces)) throw ValidationError("preprocess.traces_dir not found: " + traces.string());
  const auto timings_path = require_file(cfg, p.word_timings, "preprocess.word_timings");
  const auto electrodes_path = require_file(cfg, cfg.electrodes, "electrodes");
  auto meta = io::read_electrodes(electrodes_path);
  const auto words = io::read_word_timings(timings_path);
  if (words.empty()) throw ValidationError("word timing file is empty");

  std::vector<std::pair<std::string, fs::path>> inputs = {{"word_timings", timings_path}, {"electrodes", electrodes_path}};
  for (const auto& m : meta) inputs.emplace_back("trace:" + m.electrode_id, traces / (m.electrode_id + ".nmt"));
  for (const auto& [name, path] : inputs)
    if (!fs::is_regular_file(path)) throw ValidationError("missing input " + path.string());

  io::ResponseMatrix responses;
  for (const auto& w : words) responses.word_ids.push_back(w.word_id);
  responses.values.resize(static_cast<Eigen::Index>(meta.size()), static_cast<Eigen::Index>(words.size()));
  std::vector<VectorXd> speech(meta.size()), silence(meta.size());
  std::vector<std::int64_t> passages;
  parallel_for(meta.size(), cfg.jobs, [&](std::size_t e) {
    const auto t = io::read_tensor(traces / (meta[e].electrode_id + ".nmt"));
    if (t.n_layers != 1 || t.n_dims != 1) throw ValidationError("trace " + meta[e].electrode_id + " must have shape (1, n, 1)");
    dsp::RecordingTrace raw;
    raw.electrode_id = meta[e].electrode_id;
    raw.fs_hz = p.fs_hz;
    raw.samples = t.layer_double(0).col(0);
    const auto env = dsp::highgamma_envelope(raw, p.band_lo_hz, p.band_hi_hz, p.envelope_fs_hz);
    responses.values.row(static_cast<Eigen::Index>(e)) = dsp::word_responses(env, words, cfg.window_ms).transpose();
    auto windows = dsp::passage_window_means(env, words, 1.0);
    speech[e] = std::move(windows.speech);
    silence[e] = std::move(windows.silence);
    if (e == 0) passages = windows.passage_ids;
  });
  for (const auto& m : meta) responses.electrode_ids.push_back(m.electrode_id);

  const auto resp = dsp::responsiveness_test(speech, silence, p.alpha);
  Json per = Json::array();
  std::size_t responsive = 0;
  for (std::size_t e = 0; e < meta.size(); ++e) {
    meta[e].responsive = resp[e].responsive;
    meta[e].t_value = resp[e].t_value;
    responsive += resp[e].responsive;
    per.push_back({{"electrode_id", meta[e].electrode_id},
                   {"t_value", number(resp[e].t_value)},
                   {"p_value", number(resp[e].p_value)},
                   {"p_holm", number(resp[e].p_adjusted)},
                   {"responsive", resp[e].responsive}});
  }

  const fs::path dir = cfg.out() / "preprocess";
  fs::create_directories(dir);
  io::write_responses(responses, dir / "responses.csv");
  io::write_electrodes(meta, dir / "electrodes.csv");
  Json j;
  j["provenance"] = provenance(cfg, inputs);
  j["n_electrodes"] = meta.size();
  j["n_words"] = words.size();
  j["n_passages"] = passages.size();
  j["responsive_count"] = responsive;
  j["electrodes"] = per;
  write_json(j, dir / "preprocess_summary.json");
  return 0;
}

int cmd_encode(const PipelineConfig& cfg) {
  const auto study = load_study(cfg);
  const auto models = discover_models(cfg);
  const auto full = io::ContextWindow::full();
  auto inputs = study.inputs;

  Json per_model = Json::array();
  std::vector<double> perf, peak_score, peak_layer;
  for (const auto& model : models) {
    inputs.emplace_back("tensor:" + model, tensor_path(cfg, model, full));
    const auto e = compute_encoding(cfg, study, model, full, false);
    const auto summary = summarize_peaks(e);
    Json m = {{"model_id", model},
              {"n_layers", e.scores.cols()},
              {"n_electrodes", e.scores.rows()},
              {"mean_peak_score", number(summary.mean_score)},
              {"mean_peak_layer", number(summary.mean_layer)},
              {"excluded_electrodes", summary.excluded},
              {"invalid_cells", e.invalid_cells()}};
    const auto p = performance_of(study, model);
    m["llm_performance"] = p ? Json(*p) : Json(nullptr);
    per_model.push_back(m);
    if (p && std::isfinite(summary.mean_score)) {
      perf.push_back(*p);
      peak_score.push_back(summary.mean_score);
      peak_layer.push_back(summary.mean_layer);
    }

    // moving average of peak layer over electrodes ordered by distance
    const auto ps = encoding::peak_stats(e);
    if (ps.peaks.size() >= 50) {
      std::unordered_map<std::string, double> dist;
      for (const auto& mm : study.meta) dist[mm.electrode_id] = mm.dist_pmhg_mm;
      VectorXd layers(static_cast<Eigen::Index>(ps.peaks.size())), d(static_cast<Eigen::Index>(ps.peaks.size()));
      for (std::size_t i = 0; i < ps.peaks.size(); ++i) {
        layers[static_cast<Eigen::Index>(i)] = ps.peaks[i].peak_layer;
        d[static_cast<Eigen::Index>(i)] = dist.at(e.electrode_ids[ps.peaks[i].electrode]);
      }
      const auto curve = encoding::sliding_peak_layer(layers, d, 50);
      std::string csv = "dist_pmhg_mm,peak_layer\n";
      for (Eigen::Index i = 0; i < curve.dist.size(); ++i)
        csv += io::format_double(curve.dist[i]) + "," + io::format_double(curve.layer[i]) + "\n";
      io::write_file_atomic(cfg.out() / "encode" / model / "sliding_peak_layer.csv", csv);
    } else {
      warn(model + ": fewer than 50 electrodes, sliding peak-layer curve omitted");
    }
  }

  Json j;
  j["provenance"] = provenance(cfg, inputs);
  j["models"] = per_model;
  if (study.performance.empty()) {
    warn("no benchmark file: correlations omitted");
    j["correlations"] = {{"omitted", "no benchmark scores"}};
  } else {
    j["correlations"] = {{"peak_score_vs_performance", cross_model_correlation(perf, peak_score, cfg, "peak score")},
                         {"peak_layer_vs_performance", cross_model_correlation(perf, peak_layer, cfg, "peak layer")}};
  }
  write_json(j, cfg.out() / "encode_summary.json");
  return 0;
}

int cmd_hierarchy(const PipelineConfig& cfg) {
  const auto study = load_study(cfg);
  const auto models = discover_models(cfg);
  const auto full = io::ContextWindow::full();
  auto inputs = study.inputs;

  const bool have_lag = std::any_of(study.meta.begin(), study.meta.end(), [](const auto& m) { return m.lag_ms.has_value(); });
  if (!have_lag) warn("no electrode has a lag; lag axis omitted");

  // even/odd split over the sorted subject ids
  std::set<std::string> subjects;
  for (const auto& m : study.meta) subjects.insert(m.subject_id);
  std::map<std::string, int> subject_half;
  int idx = 0;
  for (const auto& s : subjects) subject_half[s] = idx++ % 2;
  std::vector<io::ElectrodeMeta> halves[2];
  for (const auto& m : study.meta) halves[subject_half[m.subject_id]].push_back(m);

  Json per_model = Json::array();
  std::vector<double> perf, align;
  for (const auto& model : models) {
    inputs.emplace_back("tensor:" + model, tensor_path(cfg, model, full));
    const auto e = compute_encoding(cfg, study, model, full, true);
    Json m = {{"model_id", model}};
    const auto dist = hierarchy::align_hierarchy(study.meta, e, alignment_options(cfg, hierarchy::Axis::DistPmhg));
    m["dist_pmhg"] = alignment_json(dist);
    write_profile(dist, cfg.out() / "hierarchy" / model / "profile_dist_pmhg.csv");
    if (have_lag) {
      const auto lag = hierarchy::align_hierarchy(study.meta, e, alignment_options(cfg, hierarchy::Axis::Lag));
      m["lag"] = alignment_json(lag);
      write_profile(lag, cfg.out() / "hierarchy" / model / "profile_lag.csv");
    }
    if (subjects.size() >= 2) {
      Json split = Json::array();
      for (int h = 0; h < 2; ++h) {
        const auto r = hierarchy::align_hierarchy(halves[h], e, alignment_options(cfg, hierarchy::Axis::DistPmhg));
        Json sj = alignment_json(r);
        sj["subjects"] = h == 0 ? "even" : "odd";
        split.push_back(sj);
      }
      m["subject_split"] = split;
    }
    const auto p = performance_of(study, model);
    m["llm_performance"] = p ? Json(*p) : Json(nullptr);
    per_model.push_back(m);
    if (p && !dist.degenerate) {
      perf.push_back(*p);
      align.push_back(dist.alignment_r);
    }
  }

  Json j;
  j["provenance"] = provenance(cfg, inputs);
  j["models"] = per_model;
  j["alignment_vs_performance"] = study.performance.empty() ? Json{{"omitted", "no benchmark scores"}}
                                                            : cross_model_correlation(perf, align, cfg, "alignment");
  write_json(j, cfg.out() / "hierarchy_report.json");
  return 0;
}

int cmd_cka(const PipelineConfig& cfg) {
  const auto models = discover_models(cfg);
  const auto full = io::ContextWindow::full();
  std::map<std::string, double> performance;
  std::vector<std::pair<std::string, fs::path>> inputs;
  if (!cfg.benchmarks.empty()) {
    const auto path = require_file(cfg, cfg.benchmarks, "benchmarks");
    inputs.emplace_back("benchmarks", path);
    for (const auto& b : io::read_benchmarks(path)) performance[b.model_id] = b.llm_performance;
  }
  for (const auto& m : models) {
    const auto p = tensor_path(cfg, m, full);
    if (!fs::is_regular_file(p)) throw ValidationError("tensor not found: " + p.string());
    inputs.emplace_back("tensor:" + m, p);
  }

  const fs::path dir = cfg.out() / "cka";
  fs::create_directories(dir);
  std::vector<similarity::SimilarityMatrix> matrices;
  Json pairs = Json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto a = io::read_tensor(tensor_path(cfg, models[i], full));
    const auto rows = similarity::subsample_indices(a.n_words, cfg.max_words, cfg.seed);
    const auto grams = similarity::layer_grams(a, rows, cfg.kernel, cfg.jobs);
    for (std::size_t k = i; k < models.size(); ++k) {
      similarity::SimilarityMatrix m;
      if (k == i) {
        m = similarity::layer_similarity_matrix(a, grams, a, rows, cfg.kernel);
      } else {
        const auto b = io::read_tensor(tensor_path(cfg, models[k], full));
        m = similarity::layer_similarity_matrix(a, grams, b, rows, cfg.kernel);
      }
      m.model_a = models[i];
      m.model_b = models[k];

      const std::string stem = models[i] + "__" + models[k];
      io::EmbeddingTensor t;
      t.model_id = stem;
      t.n_layers = 1;
      t.n_words = static_cast<std::size_t>(m.values.rows());
      t.n_dims = static_cast<std::size_t>(m.values.cols());
      for (std::size_t r = 0; r < t.n_words; ++r) t.word_ids.push_back(static_cast<io::WordId>(r));
      const io::RowMatrixXf vals = m.values.cast<float>();
      t.data.assign(vals.data(), vals.data() + vals.size());
      io::write_tensor(t, dir / (stem + ".nmt"));

      const auto argmax = similarity::row_argmax(m);
      std::map<int, std::size_t> offsets;
      // cyclic offsets when both models have the same depth
      const int cols = static_cast<int>(m.values.cols());
      const bool square = m.values.rows() == m.values.cols();
      for (std::size_t r = 0; r < argmax.size(); ++r) {
        const int d = argmax[r] - static_cast<int>(r);
        ++offsets[square ? ((d % cols) + cols) % cols : d];
      }
      const auto mode = std::max_element(offsets.begin(), offsets.end(),
                                         [](const auto& x, const auto& y) { return x.second < y.second; });
      Json pj = {{"model_a", models[i]},
                 {"model_b", models[k]},
                 {"file", stem + ".nmt"},
                 {"shape", {m.values.rows(), m.values.cols()}},
                 {"kernel", cfg.kernel.describe()},
                 {"words_used", rows.size()},
                 {"row_argmax", argmax},
                 {"argmax_offset_mode", mode->first},
                 {"argmax_offset_fraction", static_cast<double>(mode->second) / static_cast<double>(argmax.size())}};
      pj["diagonal_similarity"] = m.values.rows() == m.values.cols() ? number(similarity::diagonal_similarity(m)) : Json(nullptr);
      write_json(pj, dir / (stem + ".json"));
      pairs.push_back(pj);
      matrices.push_back(std::move(m));
    }
  }

  Json j;
  j["provenance"] = provenance(cfg, inputs);
  j["pairs"] = pairs;

  std::vector<io::BenchmarkScores> scores;
  for (const auto& m : models) {
    auto it = performance.find(m);
    if (it == performance.end()) continue;
    io::BenchmarkScores b;
    b.model_id = m;
    b.llm_performance = it->second;
    scores.push_back(b);
  }
  if (scores.size() < 2) {
    warn("fewer than 2 models with benchmark scores: group averages and diagonal table omitted");
    j["groups"] = {{"omitted", "fewer than 2 models with benchmark scores"}};
  } else {
    const auto labels = similarity::label_groups(scores);
    Json groups;
    for (auto cls : {similarity::PairClass::TopTop, similarity::PairClass::TopBottom, similarity::PairClass::BottomBottom}) {
      const std::string name(similarity::to_string(cls));
      try {
        const auto avg = similarity::group_average(matrices, labels, cls);
        io::write_file_atomic(dir / ("group_" + name + ".csv"), matrix_csv(avg.matrix.values));
        groups[name] = {{"pairs", avg.pairs}, {"file", "group_" + name + ".csv"}};
      } catch (const ValidationError& e) {
        warn(name + ": " + e.what());
        groups[name] = {{"omitted", e.what()}};
      }
    }
    Json labels_json;
    for (const auto& [id, g] : labels)
      labels_json[id] = g == similarity::Group::Top ? "top" : g == similarity::Group::Bottom ? "bottom" : "excluded";
    j["group_labels"] = labels_json;
    j["groups"] = groups;

    // diagonal similarity of every model to the best one, sorted by performance
    std::stable_sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) {
      if (x.llm_performance != y.llm_performance) return x.llm_performance > y.llm_performance;
      return x.model_id < y.model_id;
    });
    const std::string best = scores.front().model_id;
    std::string csv = "model_id,llm_performance,diagonal_similarity_to_best\n";
    std::vector<double> perf, diag;
    Json table = Json::array();
    for (const auto& s : scores) {
      double d = kNaN;
      for (const auto& m : matrices)
        if ((m.model_a == best && m.model_b == s.model_id) || (m.model_b == best && m.model_a == s.model_id))
          if (m.values.rows() == m.values.cols()) d = similarity::diagonal_similarity(m);
      csv += s.model_id + "," + io::format_double(s.llm_performance) + "," + io::format_double(d) + "\n";
      table.push_back({{"model_id", s.model_id}, {"llm_performance", s.llm_performance}, {"diagonal_similarity_to_best", number(d)}});
      if (std::isfinite(d)) {
        perf.push_back(s.llm_performance);
        diag.push_back(d);
      }
    }
    io::write_file_atomic(dir / "diagonal_table.csv", csv);
    j["best_model"] = best;
    j["diagonal_table"] = table;
    j["diagonal_vs_performance"] = cross_model_correlation(perf, diag, cfg, "diagonal similarity");
  }
  write_json(j, cfg.out() / "cka_summary.json");
  return 0;
}

int cmd_context(const PipelineConfig& cfg) {
  const auto study = load_study(cfg);
  const auto models = discover_models(cfg);
  const auto windows = available_windows(cfg, models);
  const auto full = io::ContextWindow::full();
  const io::ContextWindow one{1};
  auto inputs = study.inputs;

  std::map<std::pair<std::string, io::ContextWindow>, encoding::EncodingResult> enc;
  Json per_window = Json::array();
  for (auto w : windows) {
    std::vector<double> perf, align;
    Json rows = Json::array();
    for (const auto& model : models) {
      const auto path = tensor_path(cfg, model, w);
      if (!fs::is_regular_file(path)) {
        warn(model + ": no tensor for context window " + w.label());
        continue;
      }
      inputs.emplace_back("tensor:" + model + ":" + w.label(), path);
      const auto& e = enc[{model, w}] = compute_encoding(cfg, study, model, w, true);
      const auto rep = hierarchy::align_hierarchy(study.meta, e, alignment_options(cfg, hierarchy::Axis::DistPmhg));
      const auto peaks = summarize_peaks(e);
      rows.push_back({{"model_id", model},
                      {"alignment_r", number(rep.alignment_r)},
                      {"degenerate", rep.degenerate ? Json(*rep.degenerate) : Json(nullptr)},
                      {"mean_peak_score", number(peaks.mean_score)}});
      const auto p = performance_of(study, model);
      if (p && !rep.degenerate) {
        perf.push_back(*p);
        align.push_back(rep.alignment_r);
      }
    }
    Json wj = {{"context_window", w.label()}, {"models", rows}};
    wj["alignment_vs_performance"] = study.performance.empty() ? Json{{"omitted", "no benchmark scores"}}
                                                               : cross_model_correlation(perf, align, cfg, "ctx " + w.label());
    per_window.push_back(wj);
  }

  Json j;
  j["per_window"] = per_window;

  // contextual content and its relation to performance and brain scores
  Json content = Json::array();
  std::vector<double> cc_perf, cc_vals_p, cc_vals_s, cc_score;
  for (const auto& model : models) {
    const auto fp = tensor_path(cfg, model, full), op = tensor_path(cfg, model, one);
    if (!fs::is_regular_file(fp) || !fs::is_regular_file(op)) {
      warn(model + ": contextual content needs full and 1-token tensors");
      continue;
    }
    const auto cc = similarity::contextual_content(io::read_tensor(fp), io::read_tensor(op), cfg.kernel,
                                                   {cfg.max_words, cfg.seed});
    double mean_score = kNaN;
    if (auto it = enc.find({model, full}); it != enc.end()) mean_score = summarize_peaks(it->second).mean_score;
    content.push_back({{"model_id", model},
                       {"contextual_content", cc.value},
                       {"layers_used", cc.layers_used},
                       {"layers_excluded", cc.layers_excluded},
                       {"mean_peak_score", number(mean_score)}});
    if (const auto p = performance_of(study, model)) {
      cc_perf.push_back(*p);
      cc_vals_p.push_back(cc.value);
    }
    if (std::isfinite(mean_score)) {
      cc_score.push_back(mean_score);
      cc_vals_s.push_back(cc.value);
    }
  }
  j["contextual_content"] = {
      {"models", content},
      {"vs_performance", cross_model_correlation(cc_perf, cc_vals_p, cfg, "contextual content vs performance", true)},
      {"vs_peak_score", cross_model_correlation(cc_score, cc_vals_s, cfg, "contextual content vs peak score", true)}};

  // per-electrode context effect, full minus 1-token peak score averaged over models
  std::vector<encoding::EncodingResult> full_set, one_set;
  for (const auto& model : models) {
    auto f = enc.find({model, full}), o = enc.find({model, one});
    if (f != enc.end() && o != enc.end()) {
      full_set.push_back(f->second);
      one_set.push_back(o->second);
    }
  }
  if (full_set.empty()) {
    warn("context effect needs full and 1-token encodings for at least one model");
    j["context_effect"] = {{"omitted", "no model with full and 1-token tensors"}};
  } else {
    const VectorXd effect = encoding::context_effect(full_set, one_set);
    std::string csv = "electrode_id,region,dist_pmhg_mm,context_effect\n";
    std::map<io::Region, std::vector<double>> by_region;
    std::unordered_map<std::string, const io::ElectrodeMeta*> meta;
    for (const auto& m : study.meta) meta.emplace(m.electrode_id, &m);
    for (std::size_t i = 0; i < full_set.front().electrode_ids.size(); ++i) {
      const auto& m = *meta.at(full_set.front().electrode_ids[i]);
      const double v = effect[static_cast<Eigen::Index>(i)];
      csv += m.electrode_id + "," + std::string(io::to_string(m.region)) + "," + io::format_double(m.dist_pmhg_mm) + "," +
             io::format_double(v) + "\n";
      if (std::isfinite(v)) by_region[m.region].push_back(v);
    }
    io::write_file_atomic(cfg.out() / "context_effect.csv", csv);

    Json regions = Json::array();
    for (const auto& [region, vals] : by_region) {
      const VectorXd v = to_vector(vals);
      regions.push_back({{"region", std::string(io::to_string(region))},
                         {"n", vals.size()},
                         {"mean", v.mean()},
                         {"sem", vals.size() >= 2 ? number(stats::sem(v)) : Json(nullptr)}});
    }
    Json tests = Json::array();
    for (auto a = by_region.begin(); a != by_region.end(); ++a)
      for (auto b = std::next(a); b != by_region.end(); ++b) {
        if (a->second.size() < 2 || b->second.size() < 2) continue;
        const auto w = stats::wilcoxon_ranksum(to_vector(a->second), to_vector(b->second));
        tests.push_back({{"region_a", std::string(io::to_string(a->first))},
                         {"region_b", std::string(io::to_string(b->first))},
                         {"rank_sum_a", w.rank_sum},
                         {"z", number(w.z)},
                         {"p", number(w.p)},
                         {"stars", stats::significance_stars(w.p)}});
      }
    j["context_effect"] = {{"models", full_set.size()}, {"file", "context_effect.csv"}, {"regions", regions}, {"wilcoxon", tests}};
  }

  Json out;
  out["provenance"] = provenance(cfg, inputs);
  for (const auto& [k, v] : j.items()) out[k] = v;
  write_json(out, cfg.out() / "context_report.json");
  return 0;
}

int cmd_report(const PipelineConfig& cfg) {
  const fs::path out = cfg.out();
  const std::pair<const char*, fs::path> parts[] = {{"preprocess", out / "preprocess" / "preprocess_summary.json"},
                                                    {"encode", out / "encode_summary.json"},
                                                    {"hierarchy", out / "hierarchy_report.json"},
                                                    {"cka", out / "cka_summary.json"},
                                                    {"context", out / "context_report.json"}};
  Json j;
  j["config"] = cfg.to_json();
  Json reports = Json::object();
  for (const auto& [name, path] : parts) {
    if (!fs::is_regular_file(path)) {
      reports[name] = nullptr;
      continue;
    }
    Json body = Json::parse(io::read_file(path));
    body.erase("provenance");
    reports[name] = {{"file", fs::relative(path, out).generic_string()}, {"sha256", sha256_file(path)}, {"summary", body}};
  }
  if (std::all_of(std::begin(parts), std::end(parts), [&](const auto& p) { return reports[p.first].is_null(); }))
    throw ValidationError("no reports found under " + out.string());
  j["reports"] = reports;
  write_json(j, out / "report.json");
  return 0;
}

int cmd_synth(const PipelineConfig& cfg, const fs::path& out) {
  const auto& s = cfg.synth;
  synth::PlantSpec spec;
  spec.n_layers = s.n_layers;
  spec.n_words = s.n_words;
  spec.n_dims = s.n_dims;
  spec.n_electrodes = s.n_electrodes;
  spec.n_subjects = s.n_subjects;
  spec.layer_assignment = s.layer_assignment;
  spec.noise_sigma = s.noise_sigma;
  spec.seed = cfg.seed;
  spec.monotone = false;
  spec.validate();

  fs::create_directories(out / "tensors");
  const auto teacher = synth::generate_teacher(spec);
  const auto brain = synth::generate_brain(spec, teacher);
  io::write_responses(brain.responses, out / "responses.csv");
  io::write_electrodes(brain.electrodes, out / "electrodes.csv");

  struct Model {
    std::string id;
    io::EmbeddingTensor full;
    double rc, cr;
  };
  std::vector<Model> models;
  for (std::size_t i = 0; i < s.model_noise.size(); ++i) {
    const std::string id = "synth-m" + std::to_string(i + 1);
    const double rc = (700.0 - 40.0 * static_cast<double>(i)) / 1000.0, cr = (720.0 - 40.0 * static_cast<double>(i)) / 1000.0;
    models.push_back({id, synth::pseudo_model(teacher, id, s.model_noise[i], cfg.seed * 1000 + i + 1), rc, cr});
  }
  if (s.shift) {
    const std::string id = "synth-shift" + std::to_string(*s.shift);
    models.push_back({id, synth::shift_layers(models.front().full, *s.shift, id), 0.69, 0.71});
  }

  std::vector<io::BenchmarkScores> bench;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    fs::create_directories(out / "tensors" / m.id);
    for (auto w : cfg.context_windows) {
      const auto path = out / "tensors" / m.id / ("ctx_" + w.label() + ".nmt");
      if (w.is_full())
        io::write_tensor(m.full, path);
      else
        io::write_tensor(synth::context_variant(m.full, w, s.context_reliance, cfg.seed * 7919 + i * 131 + static_cast<std::size_t>(w.tokens())),
                         path);
    }
    bench.push_back({m.id, m.rc, m.cr, io::aggregate_benchmarks(m.rc, m.cr)});
  }
  io::write_benchmarks(bench, out / "benchmarks.csv");

  PipelineConfig study = cfg;
  study.tensors_dir = "tensors";
  study.responses = "responses.csv";
  study.electrodes = "electrodes.csv";
  study.benchmarks = "benchmarks.csv";
  study.models.clear();
  Json config = study.to_json();
  config["output_dir"] = "results";
  config.erase("preprocess");
  write_json(config, out / "config.json");

  Json plant;
  plant["settings"] = cfg.to_json()["synth"];
  plant["seed"] = cfg.seed;
  plant["layer_assignment"] = spec.resolved_assignment();
  plant["n_bins"] = spec.n_bins();
  Json mj = Json::array();
  for (std::size_t i = 0; i < models.size(); ++i)
    mj.push_back({{"model_id", models[i].id},
                  {"noise", i < s.model_noise.size() ? Json(s.model_noise[i]) : Json(nullptr)},
                  {"shift_of", i < s.model_noise.size() ? Json(nullptr) : Json(models.front().id)}});
  plant["models"] = mj;
  Json electrodes = Json::array();
  for (std::size_t e = 0; e < brain.electrodes.size(); ++e)
    electrodes.push_back({{"electrode_id", brain.electrodes[e].electrode_id}, {"planted_layer", brain.planted_layer[e]}});
  plant["electrodes"] = electrodes;
  write_json(plant, out / "plant.json");
  return 0;
}

} // namespace neuroalign::pipeline
