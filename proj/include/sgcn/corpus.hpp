#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "sgcn/errors.hpp"
#include "sgcn/tensor.hpp"

namespace sgcn {

inline constexpr std::size_t kDefaultMaxLen = 140;

inline constexpr std::array<std::string_view, 7> kEmotionNames = {
    "happiness", "sadness", "like", "anger", "disgust", "fear", "surprise"};
inline constexpr std::array<std::string_view, 2> kPolarityNames = {"positive", "negative"};

inline std::vector<std::string> class_names(std::size_t classes) {
  std::vector<std::string> names;
  if (classes == kEmotionNames.size()) {
    names.assign(kEmotionNames.begin(), kEmotionNames.end());
  } else if (classes == kPolarityNames.size()) {
    names.assign(kPolarityNames.begin(), kPolarityNames.end());
  } else {
    for (std::size_t c = 0; c < classes; ++c) names.push_back("class_" + std::to_string(c));
  }
  return names;
}

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  bool operator==(const SentenceSpan&) const = default;
};

/// One pre-parsed microblog. `heads[t]` is 0 for a sentence root, otherwise
/// the 1-based position of t's head inside t's own sentence.
struct Record {
  std::vector<std::string> tokens;
  std::vector<SentenceSpan> sentences;
  std::vector<std::size_t> heads;
  int label = -1;  // -1 when unlabeled
  std::string id;

  bool operator==(const Record&) const = default;
};

enum class Schema { labeled, unlabeled };

struct LoadOptions {
  Schema schema = Schema::labeled;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t classes = 7;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t truncated = 0;
  std::size_t dropped = 0;  // binary mode: records whose emotion has no polarity
  std::vector<std::string> warnings;
};

namespace detail {

// Binary mode folds the emotions into polarity; surprise has none.
inline std::optional<int> polarity_of(std::string_view emotion) {
  if (emotion == "happiness" || emotion == "like") return 0;
  if (emotion == "sadness" || emotion == "anger" || emotion == "disgust" || emotion == "fear") return 1;
  return std::nullopt;
}

// Returns nullopt when the record must be dropped (binary mode, surprise).
inline std::optional<int> parse_label(const nlohmann::json& j, std::size_t classes, std::size_t line) {
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0 || v >= static_cast<long long>(classes)) {
      throw ParseError(line, "label id " + std::to_string(v) + " outside [0," + std::to_string(classes) + ")");
    }
    return static_cast<int>(v);
  }
  if (!j.is_string()) throw ParseError(line, "label must be a class name or integer id");
  const auto name = j.get<std::string>();
  const auto names = class_names(classes);
  if (auto it = std::find(names.begin(), names.end(), name); it != names.end()) {
    return static_cast<int>(it - names.begin());
  }
  if (classes == 2 && std::find(kEmotionNames.begin(), kEmotionNames.end(), name) != kEmotionNames.end()) {
    return polarity_of(name);
  }
  throw ParseError(line, "unknown label '" + name + "'");
}

}  // namespace detail

/// Parses one corpus line:
///   {"tokens": [...], "heads": [...], "sent_bounds": [...], "label": ..., "id": ..., "rels": [...]}
/// `sent_bounds` lists exclusive sentence end offsets (defaults to one
/// sentence); `rels` is accepted and ignored. Returns nullopt for records
/// dropped by the label mapping.
inline std::optional<Record> parse_record(const std::string& line, std::size_t line_no, std::size_t record_index,
                                          const LoadOptions& options, LoadReport* report = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record must be a JSON object");
  auto field = [&](const char* name) -> const nlohmann::json* {
    auto it = j.find(name);
    return it == j.end() ? nullptr : &*it;
  };

  Record rec;
  const auto* tokens = field("tokens");
  const auto* heads = field("heads");
  if (!tokens || !tokens->is_array()) throw ParseError(line_no, "missing array field 'tokens'");
  if (!heads || !heads->is_array()) throw ParseError(line_no, "missing array field 'heads'");
  for (const auto& t : *tokens) {
    if (!t.is_string()) throw ParseError(line_no, "tokens must be strings");
    rec.tokens.push_back(t.get<std::string>());
  }
  for (const auto& h : *heads) {
    if (!h.is_number_integer() || h.get<long long>() < 0) throw ParseError(line_no, "heads must be integers >= 0");
    rec.heads.push_back(h.get<std::size_t>());
  }
  std::vector<std::size_t> bounds;
  if (const auto* sb = field("sent_bounds"); sb && !sb->is_null()) {
    if (!sb->is_array()) throw ParseError(line_no, "'sent_bounds' must be an array");
    for (const auto& b : *sb) {
      if (!b.is_number_integer() || b.get<long long>() < 0) throw ParseError(line_no, "sent_bounds must be integers");
      bounds.push_back(b.get<std::size_t>());
    }
  } else {
    bounds.push_back(rec.tokens.size());
  }
  if (const auto* id = field("id"); id && !id->is_null()) rec.id = id->is_string() ? id->get<std::string>() : id->dump();

  const auto* label = field("label");
  if (label && !label->is_null()) {
    auto mapped = detail::parse_label(*label, options.classes, line_no);
    if (!mapped) {
      if (report) ++report->dropped;
      return std::nullopt;
    }
    rec.label = *mapped;
  } else if (options.schema == Schema::labeled) {
    throw ParseError(line_no, "missing field 'label'");
  }

  // Validation of content.
  const auto n = rec.tokens.size();
  if (n == 0) throw ValidationError(record_index, "record has no tokens");
  if (rec.heads.size() != n) {
    throw ValidationError(record_index, "heads has " + std::to_string(rec.heads.size()) + " entries for " +
                                            std::to_string(n) + " tokens");
  }
  std::size_t begin = 0;
  for (std::size_t b : bounds) {
    if (b <= begin || b > n) throw ValidationError(record_index, "sent_bounds must be increasing and within tokens");
    rec.sentences.push_back({begin, b});
    begin = b;
  }
  if (begin != n) throw ValidationError(record_index, "sent_bounds must end at the token count");
  for (const auto& s : rec.sentences) {
    for (std::size_t t = s.begin; t < s.end; ++t) {
      if (rec.heads[t] > s.size()) {
        throw ValidationError(record_index, "head " + std::to_string(rec.heads[t]) + " of token " +
                                                std::to_string(t + 1) + " outside its sentence of length " +
                                                std::to_string(s.size()));
      }
    }
  }

  if (n > options.max_len) {
    rec.tokens.resize(options.max_len);
    rec.heads.resize(options.max_len);
    std::vector<SentenceSpan> kept;
    for (auto s : rec.sentences) {
      if (s.begin >= options.max_len) break;
      s.end = std::min(s.end, options.max_len);
      for (std::size_t t = s.begin; t < s.end; ++t) {
        if (rec.heads[t] > s.size()) rec.heads[t] = 0;  // head was cut off
      }
      kept.push_back(s);
    }
    rec.sentences = std::move(kept);
    if (report) {
      ++report->truncated;
      report->warnings.push_back("line " + std::to_string(line_no) + ": truncated " + std::to_string(n) +
                                 " tokens to " + std::to_string(options.max_len));
    }
  }
  return rec;
}

inline std::vector<Record> read_corpus(std::istream& in, const LoadOptions& options, LoadReport* report = nullptr) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (auto rec = parse_record(line, line_no, out.size(), options, report)) out.push_back(std::move(*rec));
  }
  if (report) report->records = out.size();
  return out;
}

inline std::vector<Record> load_corpus(const std::string& path, const LoadOptions& options,
                                       LoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("corpus", "cannot open '" + path + "'");
  return read_corpus(in, options, report);
}

inline std::string to_json_line(const Record& rec) {
  nlohmann::json j;
  if (!rec.id.empty()) j["id"] = rec.id;
  j["tokens"] = rec.tokens;
  j["heads"] = rec.heads;
  std::vector<std::size_t> bounds;
  for (const auto& s : rec.sentences) bounds.push_back(s.end);
  j["sent_bounds"] = bounds;
  if (rec.label >= 0) j["label"] = rec.label;
  return j.dump();
}

/// Word -> dense id map. Id 0 is padding and id 1 is unknown.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary() : Vocabulary(std::vector<std::string>{"<pad>", "<unk>"}) {}

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.size() < 2 || words_[kPad] != "<pad>" || words_[kUnk] != "<unk>") {
      throw Error("corpus", "vocabulary word list must start with <pad>, <unk>");
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!ids_.emplace(words_[i], i).second) throw Error("corpus", "duplicate vocabulary word '" + words_[i] + "'");
    }
  }

  std::size_t size() const { return words_.size(); }
  bool contains(const std::string& w) const { return ids_.count(w) != 0; }
  std::size_t id(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Words occurring at least `min_count` times, ordered by descending count
/// and then lexicographically so ids are reproducible.
inline Vocabulary build_vocab(const std::vector<Record>& records, std::size_t min_count) {
  if (records.empty()) throw ContractError("corpus", "build_vocab: no records");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records)
    for (const auto& t : r.tokens) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts) {
    if (c >= min_count && w != "<pad>" && w != "<unk>") kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words{"<pad>", "<unk>"};
  for (auto& [w, c] : kept) words.push_back(w);
  return Vocabulary(std::move(words));
}

enum class AdjacencyMode { syntax, all_ones };

inline std::string to_string(AdjacencyMode m) { return m == AdjacencyMode::syntax ? "syntax" : "all_ones"; }

inline AdjacencyMode parse_adjacency_mode(const std::string& s) {
  if (s == "syntax") return AdjacencyMode::syntax;
  if (s == "all_ones") return AdjacencyMode::all_ones;
  throw Error("corpus", "unknown adjacency mode '" + s + "' (expected syntax|all_ones)");
}

/// Padded dim x dim adjacency A and its normalisation D^-1/2 A D^-1/2 for
/// one record. Only the leading n x n block is non-zero.
struct GraphMatrices {
  std::size_t dim = 0;
  std::size_t n = 0;
  std::vector<std::uint8_t> adjacency;
  std::vector<double> normalized;

  std::uint8_t a(std::size_t i, std::size_t j) const { return adjacency[i * dim + j]; }
  double a_hat(std::size_t i, std::size_t j) const { return normalized[i * dim + j]; }

  /// Leading n x n block of the normalized adjacency.
  Tensor normalized_block() const {
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(normalized.begin() + i * dim, n, out.begin() + i * n);
    return Tensor::matrix(n, n, std::move(out));
  }

  bool operator==(const GraphMatrices&) const = default;
};

inline GraphMatrices build_graph(const Record& rec, AdjacencyMode mode, std::size_t dim = kDefaultMaxLen) {
  GraphMatrices g;
  g.dim = dim;
  g.n = rec.tokens.size();
  if (g.n > dim) throw ContractError("corpus", "build_graph: record longer than " + std::to_string(dim) + " tokens");
  g.adjacency.assign(dim * dim, 0);
  g.normalized.assign(dim * dim, 0.0);
  auto set = [&](std::size_t i, std::size_t j) { g.adjacency[i * dim + j] = 1; };

  if (mode == AdjacencyMode::all_ones) {
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t j = 0; j < g.n; ++j) set(i, j);
  } else {
    for (const auto& s : rec.sentences) {
      for (std::size_t t = s.begin; t < s.end; ++t) {
        set(t, t);
        if (rec.heads[t] == 0) continue;
        const std::size_t h = s.begin + rec.heads[t] - 1;
        set(t, h);
        set(h, t);
      }
    }
  }

  std::vector<double> inv_sqrt(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    std::size_t deg = 0;
    for (std::size_t j = 0; j < dim; ++j) deg += g.adjacency[i * dim + j];
    if (deg > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg));
  }
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      if (g.adjacency[i * dim + j]) g.normalized[i * dim + j] = inv_sqrt[i] * inv_sqrt[j];
  return g;
}

}  // namespace sgcn
