#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "neuroalign/io.hpp"

namespace neuroalign::similarity {

using ConstMatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

enum class Kernel { Linear, Rbf };

struct KernelSettings {
  Kernel kernel = Kernel::Rbf;
  double bandwidth_scale = 1.0; // RBF sigma = scale * median nonzero pairwise distance

  std::string describe() const;
};

Kernel parse_kernel(std::string_view text);
std::string_view to_string(Kernel k);

/// Median of the nonzero pairwise Euclidean distances between rows.
/// Throws Error("degenerate bandwidth") when every row is identical.
double median_pairwise_distance(ConstMatrixRef x);

/// LINEAR: X X^T. RBF: exp(-|xi - xj|^2 / (2 sigma^2)) with the median heuristic.
Eigen::MatrixXd gram(ConstMatrixRef x, const KernelSettings& kernel);

/// H K H with H = I - 11^T / n.
Eigen::MatrixXd center_gram(Eigen::MatrixXd k);

/// Biased HSIC up to a constant: Frobenius inner product of centered Grams.
double hsic(const Eigen::MatrixXd& kc, const Eigen::MatrixXd& lc);

/// Centered Gram with its self-HSIC, ready for repeated CKA evaluations.
struct CenteredGram {
  Eigen::MatrixXd kc;
  double self_hsic = 0.0;

  static CenteredGram from(ConstMatrixRef x, const KernelSettings& kernel);
};

/// HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)), clamped to [0, 1].
double cka(const CenteredGram& a, const CenteredGram& b);
double cka(ConstMatrixRef x, ConstMatrixRef y, const KernelSettings& kernel);

/// Uniform subsample of at most max_words rows, returned in ascending order.
std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_words, std::uint64_t seed);

struct SubsampleOptions {
  std::size_t max_words = 2000;
  std::uint64_t seed = 0;
};

struct SimilarityMatrix {
  std::string model_a;
  std::string model_b;
  Eigen::MatrixXd values; // layers of a x layers of b
  KernelSettings kernel;
};

/// CKA between every layer of a and every layer of b over shared words.
/// A tensor compared with itself reuses its Grams, giving a symmetric matrix
/// with an exact unit diagonal.
SimilarityMatrix layer_similarity_matrix(const io::EmbeddingTensor& a, const io::EmbeddingTensor& b,
                                         const KernelSettings& kernel = {}, const SubsampleOptions& sub = {});

/// Same, with the Grams of a already computed on `rows`; b's Grams are built
/// one layer at a time. When b is a itself, pass the same tensor and its
/// Grams are reused.
SimilarityMatrix layer_similarity_matrix(const io::EmbeddingTensor& a, std::span<const CenteredGram> grams_a,
                                         const io::EmbeddingTensor& b, std::span<const std::size_t> rows,
                                         const KernelSettings& kernel);

/// Centered Grams for every layer of a tensor, on the given row subset.
std::vector<CenteredGram> layer_grams(const io::EmbeddingTensor& t, std::span<const std::size_t> rows,
                                      const KernelSettings& kernel, std::size_t jobs = 1);

enum class Group { Top, Bottom, Excluded };
using GroupLabeling = std::map<std::string, Group>;

/// Sorts by llm_performance; the best min(5, M/2) models are Top, the worst
/// as many are Bottom.
GroupLabeling label_groups(std::span<const io::BenchmarkScores> scores, std::size_t group_size = 5);

enum class PairClass { TopTop, TopBottom, BottomBottom };
std::string_view to_string(PairClass c);

struct GroupAverage {
  SimilarityMatrix matrix;
  std::size_t pairs = 0;
};

/// Elementwise mean over non-self matrices whose model pair falls in the class;
/// TopBottom matrices are oriented with the Top model on rows.
GroupAverage group_average(std::span<const SimilarityMatrix> matrices, const GroupLabeling& labels, PairClass cls);

/// Mean of the main diagonal of a square matrix.
double diagonal_similarity(const SimilarityMatrix& m);

/// Column index of each row's maximum (first on ties).
std::vector<int> row_argmax(const SimilarityMatrix& m);

struct ContextualContent {
  double value = 0.0;
  std::size_t layers_used = 0;
  std::size_t layers_excluded = 0;
};

/// Mean over layers of 1 - CKA(full layer l, one-token layer 1).
ContextualContent contextual_content(const io::EmbeddingTensor& full, const io::EmbeddingTensor& one_token,
                                     const KernelSettings& kernel = {}, const SubsampleOptions& sub = {});

} // namespace neuroalign::similarity
