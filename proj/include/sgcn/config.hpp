#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgcn/corpus.hpp"
#include "sgcn/errors.hpp"

namespace sgcn {

enum class PoolingKind { percentile, average, fc };

struct PoolingSpec {
  PoolingKind kind = PoolingKind::percentile;
  double p = 50.0;

  bool operator==(const PoolingSpec&) const = default;
};

inline std::string to_string(const PoolingSpec& s) {
  switch (s.kind) {
    case PoolingKind::average: return "average";
    case PoolingKind::fc: return "fc";
    case PoolingKind::percentile: break;
  }
  std::ostringstream os;
  os << "percentile:" << s.p;
  return os.str();
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(d);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true|false, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline PoolingSpec parse_pooling(const std::string& s) {
  if (s == "average") return {PoolingKind::average, 50.0};
  if (s == "fc") return {PoolingKind::fc, 50.0};
  if (s == "max") return {PoolingKind::percentile, 100.0};
  if (s.rfind("percentile:", 0) == 0) {
    const double p = detail::parse_double("pooling", s.substr(11));
    if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile must lie in [0,100], got " + s.substr(11));
    return {PoolingKind::percentile, p};
  }
  throw ConfigError("unknown pooling '" + s + "' (expected percentile:P|average|fc)");
}

/// Hyper-parameters. Defaults are the published settings: 300-d embeddings,
/// 2x180 Bi-LSTM with batch norm and dropout 0.5, Theta of [360, C], 50th
/// percentile pooling, cross entropy with L2 and orthogonality weights of
/// 1e-8, Adam with batch 32, learning rate 1e-3 and weight decay 1e-8.
struct TrainConfig {
  std::size_t embedding_size = 300;
  std::size_t hidden_neurons = 180;
  std::size_t lstm_layers = 2;
  double dropout = 0.5;
  bool batch_norm = true;
  PoolingSpec pooling;
  double lambda_orth = 1e-8;
  double lambda_l2 = 1e-8;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-8;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t classes = 7;
  AdjacencyMode adjacency_mode = AdjacencyMode::syntax;
  std::uint64_t seed = 20190917;
  std::size_t epochs = 100;
  std::size_t min_count = 1;

  bool operator==(const TrainConfig&) const = default;

  /// [2h, C]
  std::vector<std::size_t> gcn_shape() const { return {2 * hidden_neurons, classes}; }

  void validate() const {
    if (embedding_size == 0 || hidden_neurons == 0 || lstm_layers == 0) {
      throw ConfigError("embedding_size, hidden_neurons and lstm_layers must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (pooling.kind == PoolingKind::percentile && !(pooling.p >= 0.0 && pooling.p <= 100.0)) {
      throw ConfigError("pooling percentile must lie in [0,100]");
    }
    if (lambda_orth < 0.0 || lambda_l2 < 0.0 || weight_decay < 0.0) {
      throw ConfigError("regularisation weights must be non-negative");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0 || max_len == 0 || epochs == 0) throw ConfigError("batch_size, max_len, epochs must be positive");
    if (classes < 2) throw ConfigError("classes must be at least 2");
  }

  /// Sets one field from its textual form. Keys mirror the field names;
  /// `pooling.p` sets a percentile directly.
  void set(const std::string& key, const std::string& raw) {
    const std::string v = detail::trim(raw);
    if (key == "embedding_size") embedding_size = detail::parse_size(key, v);
    else if (key == "hidden_neurons") hidden_neurons = detail::parse_size(key, v);
    else if (key == "lstm_layers") lstm_layers = detail::parse_size(key, v);
    else if (key == "dropout") dropout = detail::parse_double(key, v);
    else if (key == "batch_norm") batch_norm = detail::parse_bool(key, v);
    else if (key == "pooling") pooling = parse_pooling(v);
    else if (key == "pooling.p") pooling = parse_pooling("percentile:" + v);
    else if (key == "lambda_orth") lambda_orth = detail::parse_double(key, v);
    else if (key == "lambda_l2") lambda_l2 = detail::parse_double(key, v);
    else if (key == "batch_size") batch_size = detail::parse_size(key, v);
    else if (key == "learning_rate") learning_rate = detail::parse_double(key, v);
    else if (key == "weight_decay") weight_decay = detail::parse_double(key, v);
    else if (key == "max_len") max_len = detail::parse_size(key, v);
    else if (key == "classes") {
      classes = detail::parse_size(key, v);
      if (classes != 7 && classes != 2) throw ConfigError("classes must be 7 or 2, got " + v);
    } else if (key == "adjacency_mode") {
      try {
        adjacency_mode = parse_adjacency_mode(v);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "seed") seed = detail::parse_size(key, v);
    else if (key == "epochs") epochs = detail::parse_size(key, v);
    else if (key == "min_count") min_count = detail::parse_size(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  /// Applies "key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  }

  nlohmann::json to_json() const {
    return {{"embedding_size", embedding_size},
            {"hidden_neurons", hidden_neurons},
            {"lstm_layers", lstm_layers},
            {"dropout", dropout},
            {"batch_norm", batch_norm},
            {"pooling", pooling.kind == PoolingKind::percentile ? "percentile"
                        : pooling.kind == PoolingKind::average  ? "average"
                                                                : "fc"},
            {"pooling_p", pooling.p},
            {"lambda_orth", lambda_orth},
            {"lambda_l2", lambda_l2},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"max_len", max_len},
            {"classes", classes},
            {"adjacency_mode", to_string(adjacency_mode)},
            {"seed", seed},
            {"epochs", epochs},
            {"min_count", min_count}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
      c.embedding_size = j.at("embedding_size").get<std::size_t>();
      c.hidden_neurons = j.at("hidden_neurons").get<std::size_t>();
      c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
      c.dropout = j.at("dropout").get<double>();
      c.batch_norm = j.at("batch_norm").get<bool>();
      c.pooling = parse_pooling(j.at("pooling").get<std::string>() == "percentile"
                                    ? "percentile:50"
                                    : j.at("pooling").get<std::string>());
      c.pooling.p = j.at("pooling_p").get<double>();
      c.lambda_orth = j.at("lambda_orth").get<double>();
      c.lambda_l2 = j.at("lambda_l2").get<double>();
      c.batch_size = j.at("batch_size").get<std::size_t>();
      c.learning_rate = j.at("learning_rate").get<double>();
      c.weight_decay = j.at("weight_decay").get<double>();
      c.max_len = j.at("max_len").get<std::size_t>();
      c.classes = j.at("classes").get<std::size_t>();
      c.adjacency_mode = parse_adjacency_mode(j.at("adjacency_mode").get<std::string>());
      c.seed = j.at("seed").get<std::uint64_t>();
      c.epochs = j.at("epochs").get<std::size_t>();
      c.min_count = j.at("min_count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed config block: ") + e.what());
    }
    return c;
  }
};

/// Reads "key = value" lines; '#' starts a comment.
inline TrainConfig parse_config(std::istream& in, TrainConfig base = {}) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    base.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, std::move(base));
}

}  // namespace sgcn
