#include "neuroalign/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "neuroalign/parallel.hpp"

namespace neuroalign::similarity {

namespace {

Eigen::MatrixXd squared_distances(ConstMatrixRef x) {
  const Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * (x * x.transpose());
  d2.colwise() += norms;
  d2.rowwise() += norms.transpose();
  d2 = d2.cwiseMax(0.0);
  d2.diagonal().setZero();
  return d2;
}

double median_nonzero(const Eigen::MatrixXd& d2) {
  std::vector<double> values;
  const auto n = d2.rows();
  values.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 1; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (d2(i, j) > 0.0) values.push_back(d2(i, j));
  if (values.empty()) throw Error("degenerate bandwidth");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double med = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    med = (med + lower) / 2.0;
  }
  return std::sqrt(med);
}

void require_aligned(const io::EmbeddingTensor& a, const io::EmbeddingTensor& b) {
  if (a.word_ids != b.word_ids) throw ValidationError("tensors are not word-aligned");
}

Eigen::MatrixXd layer_rows(const io::EmbeddingTensor& t, std::size_t layer, std::span<const std::size_t> rows) {
  const auto full = t.layer(layer);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), full.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = full.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  return out;
}

} // namespace

std::string KernelSettings::describe() const {
  if (kernel == Kernel::Linear) return "linear";
  std::ostringstream ss;
  ss << "rbf: sigma = " << io::format_double(bandwidth_scale) << " x median nonzero pairwise distance";
  return ss.str();
}

Kernel parse_kernel(std::string_view text) {
  if (text == "linear" || text == "LINEAR") return Kernel::Linear;
  if (text == "rbf" || text == "RBF") return Kernel::Rbf;
  throw ValidationError("unknown kernel '" + std::string(text) + "'");
}

std::string_view to_string(Kernel k) { return k == Kernel::Linear ? "linear" : "rbf"; }

double median_pairwise_distance(ConstMatrixRef x) { return median_nonzero(squared_distances(x)); }

Eigen::MatrixXd gram(ConstMatrixRef x, const KernelSettings& kernel) {
  if (x.rows() < 2) throw ValidationError("Gram matrix needs at least 2 rows");
  if (!x.allFinite()) throw ValidationError("Gram input must be finite");
  if (kernel.kernel == Kernel::Linear) return x * x.transpose();

  if (!(kernel.bandwidth_scale > 0.0)) throw ValidationError("bandwidth scale must be positive");
  Eigen::MatrixXd d2 = squared_distances(x);
  const double sigma = kernel.bandwidth_scale * median_nonzero(d2);
  const double scale = -1.0 / (2.0 * sigma * sigma);
  return (d2.array() * scale).exp().matrix();
}

Eigen::MatrixXd center_gram(Eigen::MatrixXd k) {
  const Eigen::VectorXd col_mean = k.colwise().mean().transpose();
  const Eigen::VectorXd row_mean = k.rowwise().mean();
  const double grand = k.mean();
  k.rowwise() -= col_mean.transpose();
  k.colwise() -= row_mean;
  k.array() += grand;
  return k;
}

double hsic(const Eigen::MatrixXd& kc, const Eigen::MatrixXd& lc) {
  if (kc.rows() != lc.rows() || kc.cols() != lc.cols()) throw ValidationError("Gram sizes differ");
  return (kc.array() * lc.array()).sum();
}

CenteredGram CenteredGram::from(ConstMatrixRef x, const KernelSettings& kernel) {
  CenteredGram g;
  g.kc = center_gram(gram(x, kernel));
  g.self_hsic = hsic(g.kc, g.kc);
  return g;
}

double cka(const CenteredGram& a, const CenteredGram& b) {
  if (!(a.self_hsic > 0.0) || !(b.self_hsic > 0.0)) throw Error("zero self-HSIC");
  const double value = hsic(a.kc, b.kc) / std::sqrt(a.self_hsic * b.self_hsic);
  return std::clamp(value, 0.0, 1.0);
}

double cka(ConstMatrixRef x, ConstMatrixRef y, const KernelSettings& kernel) {
  if (x.rows() != y.rows()) throw ValidationError("CKA inputs need the same row count");
  if (x.rows() < 4) throw ValidationError("CKA needs at least 4 rows");
  return cka(CenteredGram::from(x, kernel), CenteredGram::from(y, kernel));
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_words, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_words == 0 || n <= max_words) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_words);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<CenteredGram> layer_grams(const io::EmbeddingTensor& t, std::span<const std::size_t> rows,
                                      const KernelSettings& kernel, std::size_t jobs) {
  std::vector<CenteredGram> grams(t.n_layers);
  parallel_for(t.n_layers, jobs, [&](std::size_t l) { grams[l] = CenteredGram::from(layer_rows(t, l, rows), kernel); });
  return grams;
}

SimilarityMatrix layer_similarity_matrix(const io::EmbeddingTensor& a, std::span<const CenteredGram> grams_a,
                                         const io::EmbeddingTensor& b, std::span<const std::size_t> rows,
                                         const KernelSettings& kernel) {
  require_aligned(a, b);
  if (grams_a.size() != a.n_layers) throw ValidationError("one Gram per layer of a is required");

  SimilarityMatrix m;
  m.model_a = a.model_id;
  m.model_b = b.model_id;
  m.kernel = kernel;
  m.values.resize(static_cast<Eigen::Index>(a.n_layers), static_cast<Eigen::Index>(b.n_layers));

  const bool same = &a == &b || (a.n_layers == b.n_layers && a.n_dims == b.n_dims && a.data == b.data);
  for (std::size_t j = 0; j < b.n_layers; ++j) {
    const CenteredGram gb_local = same ? CenteredGram{} : CenteredGram::from(layer_rows(b, j, rows), kernel);
    const CenteredGram& gb = same ? grams_a[j] : gb_local;
    for (std::size_t i = 0; i < a.n_layers; ++i)
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cka(grams_a[i], gb);
  }
  return m;
}

SimilarityMatrix layer_similarity_matrix(const io::EmbeddingTensor& a, const io::EmbeddingTensor& b,
                                         const KernelSettings& kernel, const SubsampleOptions& sub) {
  require_aligned(a, b);
  const auto rows = subsample_indices(a.n_words, sub.max_words, sub.seed);
  if (rows.size() < 4) throw ValidationError("CKA needs at least 4 words");
  const auto grams_a = layer_grams(a, rows, kernel);
  return layer_similarity_matrix(a, grams_a, b, rows, kernel);
}

GroupLabeling label_groups(std::span<const io::BenchmarkScores> scores, std::size_t group_size) {
  std::vector<const io::BenchmarkScores*> sorted;
  for (const auto& s : scores) sorted.push_back(&s);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    if (a->llm_performance != b->llm_performance) return a->llm_performance > b->llm_performance;
    return a->model_id < b->model_id;
  });
  const std::size_t g = std::min(group_size, sorted.size() / 2);
  GroupLabeling labels;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    Group grp = Group::Excluded;
    if (i < g)
      grp = Group::Top;
    else if (i >= sorted.size() - g)
      grp = Group::Bottom;
    labels[sorted[i]->model_id] = grp;
  }
  return labels;
}

std::string_view to_string(PairClass c) {
  switch (c) {
  case PairClass::TopTop: return "top_top";
  case PairClass::TopBottom: return "top_bottom";
  case PairClass::BottomBottom: return "bottom_bottom";
  }
  return "";
}

GroupAverage group_average(std::span<const SimilarityMatrix> matrices, const GroupLabeling& labels, PairClass cls) {
  auto group_of = [&](const std::string& id) {
    auto it = labels.find(id);
    return it == labels.end() ? Group::Excluded : it->second;
  };
  GroupAverage out;
  out.matrix.model_a = cls == PairClass::BottomBottom ? "bottom" : "top";
  out.matrix.model_b = cls == PairClass::TopTop ? "top" : "bottom";
  for (const auto& m : matrices) {
    if (m.model_a == m.model_b) continue;
    const Group ga = group_of(m.model_a), gb = group_of(m.model_b);
    Eigen::MatrixXd oriented;
    if (cls == PairClass::TopTop && ga == Group::Top && gb == Group::Top)
      oriented = m.values;
    else if (cls == PairClass::BottomBottom && ga == Group::Bottom && gb == Group::Bottom)
      oriented = m.values;
    else if (cls == PairClass::TopBottom && ga == Group::Top && gb == Group::Bottom)
      oriented = m.values;
    else if (cls == PairClass::TopBottom && ga == Group::Bottom && gb == Group::Top)
      oriented = m.values.transpose();
    else
      continue;
    if (out.pairs == 0) {
      out.matrix.values = Eigen::MatrixXd::Zero(oriented.rows(), oriented.cols());
      out.matrix.kernel = m.kernel;
    } else if (oriented.rows() != out.matrix.values.rows() || oriented.cols() != out.matrix.values.cols()) {
      throw ValidationError("similarity matrices differ in shape");
    }
    out.matrix.values += oriented;
    ++out.pairs;
  }
  if (out.pairs == 0) throw ValidationError(std::string("no model pairs in class ") + std::string(to_string(cls)));
  out.matrix.values /= static_cast<double>(out.pairs);
  return out;
}

double diagonal_similarity(const SimilarityMatrix& m) {
  if (m.values.rows() != m.values.cols()) throw ValidationError("diagonal similarity needs a square matrix");
  return m.values.diagonal().mean();
}

std::vector<int> row_argmax(const SimilarityMatrix& m) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    Eigen::Index arg = 0;
    m.values.row(i).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

ContextualContent contextual_content(const io::EmbeddingTensor& full, const io::EmbeddingTensor& one_token,
                                     const KernelSettings& kernel, const SubsampleOptions& sub) {
  require_aligned(full, one_token);
  if (one_token.context_window != io::ContextWindow{1})
    throw ValidationError("reference tensor must have context window 1");
  const auto rows = subsample_indices(full.n_words, sub.max_words, sub.seed);

  const CenteredGram reference = CenteredGram::from(layer_rows(one_token, 0, rows), kernel);
  ContextualContent out;
  double sum = 0.0;
  for (std::size_t l = 0; l < full.n_layers; ++l) {
    try {
      sum += 1.0 - cka(CenteredGram::from(layer_rows(full, l, rows), kernel), reference);
      ++out.layers_used;
    } catch (const Error&) {
      ++out.layers_excluded;
    }
  }
  if (out.layers_used == 0) throw Error("contextual content undefined on every layer");
  out.value = sum / static_cast<double>(out.layers_used);
  return out;
}

} // namespace neuroalign::similarity
