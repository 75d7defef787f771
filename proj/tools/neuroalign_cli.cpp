#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "neuroalign/error.hpp"
#include "neuroalign/pipeline.hpp"

namespace pl = neuroalign::pipeline;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string models;
  std::string context;
};

pl::PipelineConfig build_config(const Overrides& o, bool need_file) {
  pl::PipelineConfig cfg;
  if (!o.config.empty())
    cfg = pl::load_config(o.config);
  else if (need_file)
    throw neuroalign::ValidationError("--config is required");
  else {
    cfg = pl::default_config();
    cfg.base_dir = std::filesystem::current_path();
  }
  if (!o.out.empty()) cfg.output_dir = std::filesystem::absolute(o.out);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) {
    if (*o.jobs == 0) throw neuroalign::ValidationError("--jobs must be at least 1");
    cfg.jobs = *o.jobs;
  }
  if (!o.models.empty()) cfg.models = split_commas(o.models);
  if (!o.context.empty()) {
    cfg.context_windows.clear();
    for (const auto& w : split_commas(o.context)) cfg.context_windows.push_back(neuroalign::io::ContextWindow::parse(w));
  }
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Align language-model layers with cortical responses"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&o](CLI::App* sub, bool with_models) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--jobs", o.jobs, "worker threads");
    if (with_models) {
      sub->add_option("--models", o.models, "comma-separated model ids");
      sub->add_option("--context", o.context, "comma-separated context windows");
    }
  };

  auto* preprocess = app.add_subcommand("preprocess", "envelopes, word responses and responsiveness");
  auto* encode = app.add_subcommand("encode", "layer-wise encoding scores on full-context tensors");
  auto* hier = app.add_subcommand("hierarchy", "peak-layer gradient along cortex");
  auto* cka = app.add_subcommand("cka", "layer-by-layer similarity between models");
  auto* context = app.add_subcommand("context", "effect of context length");
  auto* report = app.add_subcommand("report", "collect all reports");
  auto* synth = app.add_subcommand("synth", "write a synthetic study with a planted hierarchy");
  for (auto* sub : {preprocess, report}) add_common(sub, false);
  for (auto* sub : {encode, hier, cka, context, synth}) add_common(sub, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      if (o.out.empty()) throw neuroalign::ValidationError("synth needs --out");
      auto cfg = build_config(o, false);
      return pl::cmd_synth(cfg, std::filesystem::absolute(o.out));
    }
    const auto cfg = build_config(o, true);
    if (preprocess->parsed()) return pl::cmd_preprocess(cfg);
    if (encode->parsed()) return pl::cmd_encode(cfg);
    if (hier->parsed()) return pl::cmd_hierarchy(cfg);
    if (cka->parsed()) return pl::cmd_cka(cfg);
    if (context->parsed()) return pl::cmd_context(cfg);
    if (report->parsed()) return pl::cmd_report(cfg);
  } catch (const neuroalign::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
