#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <openssl/evp.h>

#include "neuroalign/error.hpp"
#include "neuroalign/pipeline.hpp"

namespace neuroalign::pipeline {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

Json provenance(const PipelineConfig& cfg, const std::vector<std::pair<std::string, fs::path>>& inputs) {
  Json hashes = Json::object();
  for (const auto& [name, path] : inputs) hashes[name] = sha256_file(path);
  return {{"config", cfg.to_json()}, {"inputs", hashes}};
}

void write_json(const Json& j, const fs::path& path) {
  io::write_file_atomic(path, j.dump(2, ' ', false, nlohmann::json::error_handler_t::strict) + "\n");
}

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

fs::path tensor_path(const PipelineConfig& cfg, const std::string& model, io::ContextWindow window) {
  return cfg.resolve(cfg.tensors_dir) / model / ("ctx_" + window.label() + ".nmt");
}

std::vector<std::string> discover_models(const PipelineConfig& cfg) {
  const fs::path dir = cfg.resolve(cfg.tensors_dir);
  if (dir.empty() || !fs::is_directory(dir)) throw ValidationError("tensors_dir not found: " + dir.string());
  std::vector<std::string> found;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) found.push_back(entry.path().filename().string());
  std::sort(found.begin(), found.end());
  if (cfg.models.empty()) {
    if (found.empty()) throw ValidationError("no model directories under " + dir.string());
    return found;
  }
  std::vector<std::string> out;
  for (const auto& m : cfg.models) {
    if (std::find(found.begin(), found.end(), m) == found.end()) throw ValidationError("model not found: " + m);
    out.push_back(m);
  }
  return out;
}

} // namespace neuroalign::pipeline
