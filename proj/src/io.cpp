#include "neuroalign/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace neuroalign::io {

namespace {

constexpr std::string_view kMagic = "NMT1";
constexpr std::string_view kDtype = "f32le";

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("cannot parse " + what + " from '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ValidationError("cannot parse " + what + " from '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "0" || s == "False" || s == "FALSE") return false;
  throw ValidationError("cannot parse boolean from '" + s + "'");
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  table.header = split_csv_line(line);
  if (!expected_header.empty() && table.header != expected_header) {
    std::string want;
    for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
    throw ValidationError(path.string() + ": header must be exactly '" + want + "'");
  }
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size())
      throw ValidationError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(table.header.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void check_strictly_increasing(const std::vector<WordId>& ids, const char* what) {
  for (std::size_t i = 1; i < ids.size(); ++i)
    if (ids[i] <= ids[i - 1]) throw ValidationError(std::string(what) + ": word_ids must be strictly increasing");
}

} // namespace

std::string ContextWindow::label() const { return is_full() ? "full" : std::to_string(tokens_); }

ContextWindow ContextWindow::parse(std::string_view text) {
  if (text == "full" || text == "FULL") return full();
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v < 1)
    throw ValidationError("context window must be a positive integer or 'full', got '" + std::string(text) + "'");
  return ContextWindow{v};
}

EmbeddingTensor::LayerMap EmbeddingTensor::layer(std::size_t index) const {
  if (index >= n_layers) throw Error("layer index out of range");
  return LayerMap(data.data() + index * n_words * n_dims, static_cast<Eigen::Index>(n_words),
                  static_cast<Eigen::Index>(n_dims));
}

void EmbeddingTensor::validate() const {
  if (n_layers == 0 || n_words == 0 || n_dims == 0) throw ValidationError("tensor shape must be positive");
  if (data.size() != n_layers * n_words * n_dims) throw ValidationError("tensor data length does not match shape");
  if (word_ids.size() != n_words) throw ValidationError("tensor word_ids length does not match n_words");
  check_strictly_increasing(word_ids, "tensor");
  if (!std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); }))
    throw ValidationError("tensor contains non-finite values");
}

void ResponseMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != electrode_ids.size())
    throw ValidationError("response rows do not match electrode_ids");
  if (static_cast<std::size_t>(values.cols()) != word_ids.size())
    throw ValidationError("response columns do not match word_ids");
  check_strictly_increasing(word_ids, "responses");
  if (!values.allFinite()) throw ValidationError("responses contain non-finite values");
}

std::string_view to_string(Region r) {
  switch (r) {
  case Region::HG: return "HG";
  case Region::STG: return "STG";
  case Region::IFG: return "IFG";
  case Region::Subcentral: return "SUBCENTRAL";
  case Region::Other: return "OTHER";
  }
  return "OTHER";
}

Region parse_region(std::string_view text) {
  if (text == "HG") return Region::HG;
  if (text == "STG") return Region::STG;
  if (text == "IFG") return Region::IFG;
  if (text == "SUBCENTRAL") return Region::Subcentral;
  if (text == "OTHER") return Region::Other;
  throw ValidationError("unknown region '" + std::string(text) + "'");
}

void write_tensor(const EmbeddingTensor& t, const std::filesystem::path& path) {
  if (!std::all_of(t.data.begin(), t.data.end(), [](float v) { return std::isfinite(v); }))
    throw ValidationError("tensor contains non-finite values");
  t.validate();

  nlohmann::ordered_json header;
  header["magic"] = kMagic;
  header["dtype"] = kDtype;
  header["shape"] = {t.n_layers, t.n_words, t.n_dims};
  header["model_id"] = t.model_id;
  if (t.context_window.is_full())
    header["context_window"] = "full";
  else
    header["context_window"] = t.context_window.tokens();
  header["word_ids"] = t.word_ids;

  std::string out = header.dump();
  out.push_back('\n');
  const std::size_t header_len = out.size();
  out.resize(header_len + t.data.size() * 4);
  char* dst = out.data() + header_len;
  for (float v : t.data) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  write_file_atomic(path, out);
}

EmbeddingTensor read_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 1 || bytes.front() != '{') throw ValidationError(path.string() + ": bad magic");
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw ValidationError(path.string() + ": malformed header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string_view(bytes).substr(0, newline));
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(path.string() + ": malformed header");
  }
  if (!header.is_object() || !header.contains("magic") || header["magic"] != kMagic)
    throw ValidationError(path.string() + ": bad magic");

  EmbeddingTensor t;
  try {
    if (header.at("dtype") != kDtype) throw ValidationError(path.string() + ": unsupported dtype");
    const auto& shape = header.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw ValidationError(path.string() + ": malformed header");
    t.n_layers = shape[0].get<std::size_t>();
    t.n_words = shape[1].get<std::size_t>();
    t.n_dims = shape[2].get<std::size_t>();
    t.model_id = header.at("model_id").get<std::string>();
    const auto& cw = header.at("context_window");
    t.context_window = cw.is_string() ? ContextWindow::parse(cw.get<std::string>()) : ContextWindow{cw.get<int>()};
    if (!t.context_window.is_full() && t.context_window.tokens() < 1)
      throw ValidationError(path.string() + ": malformed header");
    t.word_ids = header.at("word_ids").get<std::vector<WordId>>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(path.string() + ": malformed header");
  }

  const std::size_t count = t.n_layers * t.n_words * t.n_dims;
  const std::size_t payload = bytes.size() - newline - 1;
  if (payload != count * 4) throw ValidationError(path.string() + ": payload length mismatch");

  t.data.resize(count);
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + newline + 1);
  for (std::size_t i = 0; i < count; ++i, src += 4) {
    const std::uint32_t bits = std::uint32_t(src[0]) | (std::uint32_t(src[1]) << 8) | (std::uint32_t(src[2]) << 16) |
                               (std::uint32_t(src[3]) << 24);
    t.data[i] = std::bit_cast<float>(bits);
  }
  t.validate();
  return t;
}

double aggregate_benchmarks(double reading_comprehension, double commonsense_reasoning) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(reading_comprehension) || !in_unit(commonsense_reasoning))
    throw ValidationError("benchmark scores must lie in [0, 1]");
  return (reading_comprehension + commonsense_reasoning) / 2.0;
}

EmbeddingTensor select_words(const EmbeddingTensor& t, const std::vector<WordId>& ids) {
  std::unordered_map<WordId, std::size_t> position;
  for (std::size_t i = 0; i < t.word_ids.size(); ++i) position.emplace(t.word_ids[i], i);

  EmbeddingTensor out;
  out.model_id = t.model_id;
  out.context_window = t.context_window;
  out.n_layers = t.n_layers;
  out.n_words = ids.size();
  out.n_dims = t.n_dims;
  out.word_ids = ids;
  out.data.resize(out.n_layers * out.n_words * out.n_dims);
  for (std::size_t l = 0; l < t.n_layers; ++l) {
    for (std::size_t w = 0; w < ids.size(); ++w) {
      auto it = position.find(ids[w]);
      if (it == position.end()) throw Error("word id " + std::to_string(ids[w]) + " missing from tensor");
      const float* src = t.data.data() + (l * t.n_words + it->second) * t.n_dims;
      std::copy(src, src + t.n_dims, out.data.begin() + static_cast<std::ptrdiff_t>((l * out.n_words + w) * t.n_dims));
    }
  }
  return out;
}

std::pair<EmbeddingTensor, ResponseMatrix> align_words(const EmbeddingTensor& t, const ResponseMatrix& r) {
  std::vector<WordId> a = t.word_ids, b = r.word_ids;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<WordId> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
  if (shared.empty()) throw ValidationError("tensor and responses share no word ids");

  EmbeddingTensor t_out = (shared == t.word_ids) ? t : select_words(t, shared);

  ResponseMatrix r_out;
  r_out.electrode_ids = r.electrode_ids;
  r_out.word_ids = shared;
  if (shared == r.word_ids) {
    r_out.values = r.values;
  } else {
    std::unordered_map<WordId, Eigen::Index> column;
    for (std::size_t i = 0; i < r.word_ids.size(); ++i) column.emplace(r.word_ids[i], static_cast<Eigen::Index>(i));
    r_out.values.resize(r.values.rows(), static_cast<Eigen::Index>(shared.size()));
    for (std::size_t w = 0; w < shared.size(); ++w) r_out.values.col(static_cast<Eigen::Index>(w)) = r.values.col(column.at(shared[w]));
  }
  return {std::move(t_out), std::move(r_out)};
}

std::vector<ElectrodeMeta> read_electrodes(const std::filesystem::path& path) {
  auto table = read_csv(path, {"electrode_id", "subject_id", "dist_pmhg_mm", "region", "lag_ms", "responsive", "t_value"});
  std::vector<ElectrodeMeta> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ElectrodeMeta m;
    m.electrode_id = row[0];
    m.subject_id = row[1];
    m.dist_pmhg_mm = parse_double(row[2], "dist_pmhg_mm");
    m.region = parse_region(row[3]);
    if (!row[4].empty()) m.lag_ms = parse_double(row[4], "lag_ms");
    m.responsive = parse_bool(row[5]);
    m.t_value = parse_double(row[6], "t_value");
    if (!std::isfinite(m.dist_pmhg_mm) || m.dist_pmhg_mm < 0.0)
      throw ValidationError("electrode " + m.electrode_id + ": dist_pmhg_mm must be finite and non-negative");
    if (m.lag_ms && (!std::isfinite(*m.lag_ms) || *m.lag_ms < 0.0))
      throw ValidationError("electrode " + m.electrode_id + ": lag_ms must be finite and non-negative");
    out.push_back(std::move(m));
  }
  return out;
}

void write_electrodes(const std::vector<ElectrodeMeta>& meta, const std::filesystem::path& path) {
  std::string out = "electrode_id,subject_id,dist_pmhg_mm,region,lag_ms,responsive,t_value\n";
  for (const auto& m : meta) {
    out += m.electrode_id + "," + m.subject_id + "," + format_double(m.dist_pmhg_mm) + "," +
           std::string(to_string(m.region)) + "," + (m.lag_ms ? format_double(*m.lag_ms) : "") + "," +
           (m.responsive ? "true" : "false") + "," + format_double(m.t_value) + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<BenchmarkScores> read_benchmarks(const std::filesystem::path& path) {
  auto table = read_csv(path, {"model_id", "reading_comprehension", "commonsense_reasoning"});
  std::vector<BenchmarkScores> out;
  for (const auto& row : table.rows) {
    BenchmarkScores s;
    s.model_id = row[0];
    s.reading_comprehension = parse_double(row[1], "reading_comprehension");
    s.commonsense_reasoning = parse_double(row[2], "commonsense_reasoning");
    s.llm_performance = aggregate_benchmarks(s.reading_comprehension, s.commonsense_reasoning);
    out.push_back(std::move(s));
  }
  return out;
}

void write_benchmarks(const std::vector<BenchmarkScores>& scores, const std::filesystem::path& path) {
  std::string out = "model_id,reading_comprehension,commonsense_reasoning\n";
  for (const auto& s : scores)
    out += s.model_id + "," + format_double(s.reading_comprehension) + "," + format_double(s.commonsense_reasoning) + "\n";
  write_file_atomic(path, out);
}

ResponseMatrix read_responses(const std::filesystem::path& path) {
  auto table = read_csv(path, {});
  if (table.header.empty() || table.header[0] != "electrode_id")
    throw ValidationError(path.string() + ": first column must be electrode_id");
  ResponseMatrix r;
  for (std::size_t c = 1; c < table.header.size(); ++c) r.word_ids.push_back(parse_int(table.header[c], "word id"));
  r.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(r.word_ids.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    r.electrode_ids.push_back(table.rows[i][0]);
    for (std::size_t c = 1; c < table.header.size(); ++c)
      r.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - 1)) = parse_double(table.rows[i][c], "response");
  }
  r.validate();
  return r;
}

void write_responses(const ResponseMatrix& r, const std::filesystem::path& path) {
  r.validate();
  std::string out = "electrode_id";
  for (auto id : r.word_ids) out += "," + std::to_string(id);
  out += "\n";
  for (Eigen::Index i = 0; i < r.values.rows(); ++i) {
    out += r.electrode_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < r.values.cols(); ++j) out += "," + format_double(r.values(i, j));
    out += "\n";
  }
  write_file_atomic(path, out);
}

std::vector<WordTiming> read_word_timings(const std::filesystem::path& path) {
  auto table = read_csv(path, {"word_id", "center_s", "passage_id", "passage_onset_s", "preceding_silence_end_s"});
  std::vector<WordTiming> out;
  for (const auto& row : table.rows) {
    WordTiming w;
    w.word_id = parse_int(row[0], "word_id");
    w.center_s = parse_double(row[1], "center_s");
    w.passage_id = parse_int(row[2], "passage_id");
    w.passage_onset_s = parse_double(row[3], "passage_onset_s");
    w.preceding_silence_end_s = parse_double(row[4], "preceding_silence_end_s");
    if (w.center_s < 0.0 || w.passage_onset_s > w.center_s)
      throw ValidationError("word " + std::to_string(w.word_id) + ": center must be non-negative and after passage onset");
    out.push_back(w);
  }
  return out;
}

void write_word_timings(const std::vector<WordTiming>& words, const std::filesystem::path& path) {
  std::string out = "word_id,center_s,passage_id,passage_onset_s,preceding_silence_end_s\n";
  for (const auto& w : words)
    out += std::to_string(w.word_id) + "," + format_double(w.center_s) + "," + std::to_string(w.passage_id) + "," +
           format_double(w.passage_onset_s) + "," + format_double(w.preceding_silence_end_s) + "\n";
  write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

} // namespace neuroalign::io
