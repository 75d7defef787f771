#include <fstream>
#include <set>

#include "neuroalign/error.hpp"
#include "neuroalign/pipeline.hpp"
#include "neuroalign/ridge.hpp"

namespace neuroalign::pipeline {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ValidationError("unknown config key '" + where + key + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key '" + where + key + "' has the wrong type");
  }
}

void read_path(const Json& j, const char* key, fs::path& out, const std::string& where = "") {
  std::string s;
  read(j, key, s, where);
  if (!s.empty()) out = s;
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw ValidationError(std::string(name) + " must be positive");
}

std::vector<io::ContextWindow> default_windows() {
  return {io::ContextWindow{1},  io::ContextWindow{5},   io::ContextWindow{10},       io::ContextWindow{20},
          io::ContextWindow{50}, io::ContextWindow{100}, io::ContextWindow::full()};
}

Json window_json(io::ContextWindow w) { return w.is_full() ? Json("full") : Json(w.tokens()); }

io::ContextWindow window_from(const Json& j) {
  if (j.is_string()) return io::ContextWindow::parse(j.get<std::string>());
  if (j.is_number_integer()) return io::ContextWindow::parse(std::to_string(j.get<long long>()));
  throw ValidationError("context window must be a positive integer or \"full\"");
}

} // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.lambdas = encoding::default_lambda_grid();
  c.context_windows = default_windows();
  return c;
}

PipelineConfig config_from_json(const Json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"tensors_dir", "responses", "electrodes", "benchmarks", "output_dir", "models", "pca_k", "window_ms",
                  "n_folds", "lambdas", "bin_width_mm", "bin_width_ms", "context_windows", "kernel", "seed", "jobs",
                  "preprocess", "hierarchy", "synth"},
                 "");
  PipelineConfig c = default_config();
  c.base_dir = base_dir;
  read_path(j, "tensors_dir", c.tensors_dir);
  read_path(j, "responses", c.responses);
  read_path(j, "electrodes", c.electrodes);
  read_path(j, "benchmarks", c.benchmarks);
  read_path(j, "output_dir", c.output_dir);
  read(j, "models", c.models);
  read(j, "pca_k", c.pca_k);
  read(j, "window_ms", c.window_ms);
  read(j, "n_folds", c.n_folds);
  read(j, "lambdas", c.lambdas);
  read(j, "bin_width_mm", c.bin_width_mm);
  read(j, "bin_width_ms", c.bin_width_ms);
  read(j, "seed", c.seed);
  read(j, "jobs", c.jobs);
  if (j.contains("context_windows")) {
    if (!j["context_windows"].is_array()) throw ValidationError("context_windows must be an array");
    c.context_windows.clear();
    for (const auto& w : j["context_windows"]) c.context_windows.push_back(window_from(w));
  }
  if (j.contains("kernel")) {
    const auto& k = j["kernel"];
    reject_unknown(k, {"type", "bandwidth_scale", "max_words"}, "kernel.");
    std::string type = std::string(similarity::to_string(c.kernel.kernel));
    read(k, "type", type, "kernel.");
    c.kernel.kernel = similarity::parse_kernel(type);
    read(k, "bandwidth_scale", c.kernel.bandwidth_scale, "kernel.");
    read(k, "max_words", c.max_words, "kernel.");
  }
  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    reject_unknown(p, {"traces_dir", "word_timings", "fs_hz", "band_lo_hz", "band_hi_hz", "envelope_fs_hz", "alpha"},
                   "preprocess.");
    read_path(p, "traces_dir", c.preprocess.traces_dir, "preprocess.");
    read_path(p, "word_timings", c.preprocess.word_timings, "preprocess.");
    read(p, "fs_hz", c.preprocess.fs_hz, "preprocess.");
    read(p, "band_lo_hz", c.preprocess.band_lo_hz, "preprocess.");
    read(p, "band_hi_hz", c.preprocess.band_hi_hz, "preprocess.");
    read(p, "envelope_fs_hz", c.preprocess.envelope_fs_hz, "preprocess.");
    read(p, "alpha", c.preprocess.alpha, "preprocess.");
  }
  if (j.contains("hierarchy")) {
    const auto& h = j["hierarchy"];
    reject_unknown(h, {"max_distance_mm", "min_com_spread", "bootstrap_resamples"}, "hierarchy.");
    if (h.contains("max_distance_mm") && !h["max_distance_mm"].is_null()) {
      double v = 0;
      read(h, "max_distance_mm", v, "hierarchy.");
      c.hierarchy.max_distance_mm = v;
    }
    read(h, "min_com_spread", c.hierarchy.min_com_spread, "hierarchy.");
    read(h, "bootstrap_resamples", c.hierarchy.bootstrap_resamples, "hierarchy.");
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    reject_unknown(s,
                   {"n_layers", "n_words", "n_dims", "n_electrodes", "n_subjects", "layer_assignment", "noise_sigma",
                    "model_noise", "shift", "context_reliance"},
                   "synth.");
    read(s, "n_layers", c.synth.n_layers, "synth.");
    read(s, "n_words", c.synth.n_words, "synth.");
    read(s, "n_dims", c.synth.n_dims, "synth.");
    read(s, "n_electrodes", c.synth.n_electrodes, "synth.");
    read(s, "n_subjects", c.synth.n_subjects, "synth.");
    read(s, "layer_assignment", c.synth.layer_assignment, "synth.");
    read(s, "noise_sigma", c.synth.noise_sigma, "synth.");
    read(s, "model_noise", c.synth.model_noise, "synth.");
    read(s, "context_reliance", c.synth.context_reliance, "synth.");
    if (s.contains("shift") && !s["shift"].is_null()) {
      int v = 0;
      read(s, "shift", v, "synth.");
      c.synth.shift = v;
    }
  }

  if (c.pca_k == 0 && j.contains("pca_k")) warn("pca_k = 0: PCA disabled");
  require_positive(c.window_ms, "window_ms");
  require_positive(c.bin_width_mm, "bin_width_mm");
  require_positive(c.bin_width_ms, "bin_width_ms");
  require_positive(c.kernel.bandwidth_scale, "kernel.bandwidth_scale");
  if (c.n_folds < 2) throw ValidationError("n_folds must be at least 2");
  if (c.lambdas.empty()) throw ValidationError("lambdas must be non-empty");
  for (double l : c.lambdas) require_positive(l, "every lambda");
  if (c.context_windows.empty()) throw ValidationError("context_windows must be non-empty");
  if (c.jobs == 0) throw ValidationError("jobs must be at least 1");
  if (c.max_words < 4) throw ValidationError("kernel.max_words must be at least 4");
  if (!(c.preprocess.alpha > 0.0 && c.preprocess.alpha < 1.0)) throw ValidationError("preprocess.alpha must lie in (0, 1)");
  if (c.hierarchy.bootstrap_resamples < 100) throw ValidationError("hierarchy.bootstrap_resamples must be at least 100");
  if (c.synth.model_noise.empty() || c.synth.model_noise.size() > 12)
    throw ValidationError("synth.model_noise must hold 1 to 12 entries");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

Json PipelineConfig::to_json() const {
  Json j;
  j["tensors_dir"] = tensors_dir.generic_string();
  j["responses"] = responses.generic_string();
  j["electrodes"] = electrodes.generic_string();
  j["benchmarks"] = benchmarks.generic_string();
  j["models"] = models;
  j["pca_k"] = pca_k;
  j["window_ms"] = window_ms;
  j["n_folds"] = n_folds;
  j["lambdas"] = lambdas;
  j["bin_width_mm"] = bin_width_mm;
  j["bin_width_ms"] = bin_width_ms;
  j["context_windows"] = Json::array();
  for (auto w : context_windows) j["context_windows"].push_back(window_json(w));
  j["kernel"] = {{"type", std::string(similarity::to_string(kernel.kernel))},
                 {"bandwidth_scale", kernel.bandwidth_scale},
                 {"max_words", max_words}};
  j["seed"] = seed;
  j["preprocess"] = {{"traces_dir", preprocess.traces_dir.generic_string()},
                     {"word_timings", preprocess.word_timings.generic_string()},
                     {"fs_hz", preprocess.fs_hz},
                     {"band_lo_hz", preprocess.band_lo_hz},
                     {"band_hi_hz", preprocess.band_hi_hz},
                     {"envelope_fs_hz", preprocess.envelope_fs_hz},
                     {"alpha", preprocess.alpha}};
  j["hierarchy"] = {{"max_distance_mm", hierarchy.max_distance_mm ? Json(*hierarchy.max_distance_mm) : Json(nullptr)},
                    {"min_com_spread", hierarchy.min_com_spread},
                    {"bootstrap_resamples", hierarchy.bootstrap_resamples}};
  j["synth"] = {{"n_layers", synth.n_layers},
                {"n_words", synth.n_words},
                {"n_dims", synth.n_dims},
                {"n_electrodes", synth.n_electrodes},
                {"n_subjects", synth.n_subjects},
                {"layer_assignment", synth.layer_assignment},
                {"noise_sigma", synth.noise_sigma},
                {"model_noise", synth.model_noise},
                {"shift", synth.shift ? Json(*synth.shift) : Json(nullptr)},
                {"context_reliance", synth.context_reliance}};
  return j;
}

} // namespace neuroalign::pipeline
