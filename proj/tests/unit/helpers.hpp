#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>

#include "neuroalign/io.hpp"

namespace testutil {

inline Eigen::MatrixXd randn(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Eigen::VectorXd randn_vec(Eigen::Index n, std::uint64_t seed) { return randn(n, 1, seed); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("neuroalign_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Tensor whose layers are the given matrices (words x dims each).
inline neuroalign::io::EmbeddingTensor tensor_from_layers(const std::vector<Eigen::MatrixXd>& layers,
                                                          const std::string& model_id = "m",
                                                          neuroalign::io::ContextWindow cw = neuroalign::io::ContextWindow::full()) {
  neuroalign::io::EmbeddingTensor t;
  t.model_id = model_id;
  t.context_window = cw;
  t.n_layers = layers.size();
  t.n_words = static_cast<std::size_t>(layers.front().rows());
  t.n_dims = static_cast<std::size_t>(layers.front().cols());
  for (std::size_t w = 0; w < t.n_words; ++w) t.word_ids.push_back(static_cast<neuroalign::io::WordId>(w));
  t.data.resize(t.n_layers * t.n_words * t.n_dims);
  for (std::size_t l = 0; l < t.n_layers; ++l) {
    Eigen::Map<neuroalign::io::RowMatrixXf> dst(t.data.data() + l * t.n_words * t.n_dims,
                                               static_cast<Eigen::Index>(t.n_words), static_cast<Eigen::Index>(t.n_dims));
    dst = layers[l].cast<float>();
  }
  return t;
}

} // namespace testutil
