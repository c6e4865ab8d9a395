#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgcn/checkpoint.hpp"
#include "sgcn/config.hpp"
#include "sgcn/corpus.hpp"
#include "sgcn/metrics.hpp"
#include "sgcn/model.hpp"
#include "sgcn/training.hpp"

// Command-line front end: train, eval, predict, inspect-graph, sweep.
namespace sgcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("cli", what) {}
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string pooling;
  std::optional<std::size_t> classes;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "override a config field (key=value), repeatable");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--mode", mode, "adjacency mode")->check(CLI::IsMember({"syntax", "all_ones"}));
    cmd->add_option("--pooling", pooling, "percentile:P | average | fc");
    cmd->add_option("--classes", classes, "7 (emotions) or 2 (polarity)")->check(CLI::IsMember({7, 2}));
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_path.empty()) c = load_config(config_path);
    for (const auto& o : overrides) c.apply_override(o);
    if (seed) c.seed = *seed;
    if (!mode.empty()) c.adjacency_mode = parse_adjacency_mode(mode);
    if (!pooling.empty()) c.pooling = parse_pooling(pooling);
    if (classes) c.classes = *classes;
    c.validate();
    return c;
  }
};

inline std::vector<Record> read_records(const std::string& path, Schema schema, const TrainConfig& config,
                                        std::ostream& err) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("corpus '" + path + "' does not exist");
  LoadReport report;
  auto records = load_corpus(path, {schema, config.max_len, config.classes}, &report);
  for (const auto& w : report.warnings) err << "warning: " << path << ": " << w << "\n";
  if (report.dropped) err << "note: " << path << ": dropped " << report.dropped << " records without polarity\n";
  return records;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cli", "cannot write '" + path + "'");
  out << text;
}

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

struct TrainArgs {
  CommonOptions common;
  std::string train, dev, checkpoint, out;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = a.common.resolve();
  const auto train_records = read_records(a.train, Schema::labeled, config, err);
  const auto dev_records = a.dev.empty() ? std::vector<Record>{} : read_records(a.dev, Schema::labeled, config, err);
  auto result = train(config, train_records, dev_records, [&](const EpochStats& s) {
    err << "epoch " << s.epoch << " loss " << fmt(s.train_loss, 6) << " train-acc " << fmt(s.train_accuracy)
        << " dev-macroF " << fmt(s.dev_macro_f) << " dev-microF " << fmt(s.dev_micro_f) << "\n";
  });
  save_checkpoint(result.model, a.checkpoint);
  write_text(a.out.empty() ? a.checkpoint + ".history.jsonl" : a.out, history_jsonl(config, result));
  const auto& best = result.history.at(result.best_epoch - 1);
  out << "best epoch " << result.best_epoch << ": dev macro-F " << fmt(best.dev_macro_f) << " micro-F "
      << fmt(best.dev_micro_f) << " (train accuracy " << fmt(best.train_accuracy) << ")\n";
  return kExitOk;
}

struct EvalArgs {
  CommonOptions common;
  std::string checkpoint, test, out;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  Model model = load_checkpoint(a.checkpoint);
  const auto records = read_records(a.test, Schema::labeled, model.config, err);
  const auto examples = make_examples(records, model.vocab, model.config);
  const auto report = evaluate_model(model, examples);
  const auto names = class_names(model.config.classes);
  out << format_table(report, names);
  if (!a.out.empty()) write_text(a.out, to_json(report, names).dump(2) + "\n");
  return kExitOk;
}

struct PredictArgs {
  CommonOptions common;
  std::string checkpoint, test, out;
};

inline int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  Model model = load_checkpoint(a.checkpoint);
  const auto records = read_records(a.test, Schema::unlabeled, model.config, err);
  const auto examples = make_examples(records, model.vocab, model.config);
  const auto names = class_names(model.config.classes);
  std::string text;
  const auto logits = model.logits(examples);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto probs = softmax(logits[i]);
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    nlohmann::json j{{"index", i}, {"label", names[best]}, {"label_id", best}, {"probabilities", probs}};
    if (!records[i].id.empty()) j["id"] = records[i].id;
    text += j.dump() + "\n";
  }
  if (a.out.empty()) out << text;
  else write_text(a.out, text);
  return kExitOk;
}

struct InspectArgs {
  CommonOptions common;
  std::string test, out;
  std::size_t index = 0;
};

inline int cmd_inspect_graph(const InspectArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = a.common.resolve();
  const auto records = read_records(a.test, Schema::unlabeled, config, err);
  if (a.index >= records.size()) {
    throw UsageError("record index " + std::to_string(a.index) + " out of range (" + std::to_string(records.size()) +
                     " records)");
  }
  const auto& rec = records[a.index];
  const auto g = build_graph(rec, config.adjacency_mode, config.max_len);
  out << "tokens:";
  for (const auto& t : rec.tokens) out << ' ' << t;
  out << "\nA (" << g.n << "x" << g.n << ", " << to_string(config.adjacency_mode) << "):\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) out << (j ? " " : "") << static_cast<int>(g.a(i, j));
    out << "\n";
  }
  out << "A_hat:\n";
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) out << (j ? " " : "") << fmt(g.a_hat(i, j));
    out << "\n";
  }
  if (!a.out.empty()) {
    nlohmann::json A = nlohmann::json::array(), H = nlohmann::json::array();
    for (std::size_t i = 0; i < g.n; ++i) {
      nlohmann::json ra = nlohmann::json::array(), rh = nlohmann::json::array();
      for (std::size_t j = 0; j < g.n; ++j) {
        ra.push_back(static_cast<int>(g.a(i, j)));
        rh.push_back(g.a_hat(i, j));
      }
      A.push_back(ra);
      H.push_back(rh);
    }
    write_text(a.out, nlohmann::json{{"tokens", rec.tokens}, {"adjacency", A}, {"normalized", H}}.dump() + "\n");
  }
  return kExitOk;
}

struct SweepArgs {
  CommonOptions common;
  std::string train, dev, test, out, grid;
};

struct SweepRow {
  std::string value;
  std::size_t best_epoch = 0;
  EvalReport report;
};

/// "key=v1,v2,..." -> (key, values)
inline std::pair<std::string, std::vector<std::string>> parse_grid(const std::string& grid) {
  const auto eq = grid.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--grid expects key=v1,v2,...");
  std::pair<std::string, std::vector<std::string>> g{grid.substr(0, eq), {}};
  std::stringstream ss(grid.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ',')) {
    v = detail::trim(v);
    if (!v.empty()) g.second.push_back(v);
  }
  if (g.second.empty()) throw UsageError("--grid has no values");
  return g;
}

inline std::vector<SweepRow> run_sweep(const TrainConfig& base, const std::string& key,
                                       const std::vector<std::string>& values, const std::vector<Record>& train_records,
                                       const std::vector<Record>& dev_records, const std::vector<Record>& test_records) {
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    TrainConfig c = base;
    c.set(key, v);
    c.validate();
    auto result = train(c, train_records, dev_records);
    const auto examples = make_examples(test_records, result.model.vocab, c);
    rows.push_back({v, result.best_epoch, evaluate_model(result.model, examples)});
  }
  return rows;
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const auto [key, values] = parse_grid(a.grid);
  const TrainConfig config = a.common.resolve();
  {
    TrainConfig probe = config;
    probe.set(key, values.front());  // reject unknown keys before training anything
  }
  const auto train_records = read_records(a.train, Schema::labeled, config, err);
  const auto dev_records = a.dev.empty() ? std::vector<Record>{} : read_records(a.dev, Schema::labeled, config, err);
  const auto test_records = a.test.empty() ? dev_records : read_records(a.test, Schema::labeled, config, err);
  if (test_records.empty()) throw UsageError("sweep needs --test or --dev records to score");

  const auto rows = run_sweep(config, key, values, train_records, dev_records, test_records);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %10s %10s %10s %10s %6s\n", key.c_str(), "Macro-P", "Macro-R", "Macro-F",
                "Micro-F", "Epoch");
  out << buf;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %10.4f %10.4f %10.4f %10.4f %6zu\n", r.value.c_str(),
                  r.report.macro.precision, r.report.macro.recall, r.report.macro.f, r.report.micro.f, r.best_epoch);
    out << buf;
    j.push_back({{"key", key},
                 {"value", r.value},
                 {"best_epoch", r.best_epoch},
                 {"report", to_json(r.report, class_names(config.classes))}});
  }
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  return kExitOk;
}

/// Runs the CLI on `args` (without the program name).
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Syntax-based GCN emotion classifier"};
  app.name("sgcn");
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + history");
  train_args.common.attach(train_cmd);
  train_cmd->add_option("--train", train_args.train, "training corpus")->required();
  train_cmd->add_option("--dev", train_args.dev, "development corpus");
  train_cmd->add_option("--checkpoint", train_args.checkpoint, "checkpoint to write")->required();
  train_cmd->add_option("--out", train_args.out, "history file (default: <checkpoint>.history.jsonl)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labeled corpus");
  eval_args.common.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--test", eval_args.test, "labeled corpus")->required();
  eval_cmd->add_option("--out", eval_args.out, "JSON report");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "label every record of a corpus");
  predict_args.common.attach(predict_cmd);
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required();
  predict_cmd->add_option("--test", predict_args.test, "corpus (labels optional)")->required();
  predict_cmd->add_option("--out", predict_args.out, "JSON lines output (default: stdout)");

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand("inspect-graph", "print A and A_hat for one record");
  inspect_args.common.attach(inspect_cmd);
  inspect_cmd->add_option("--test", inspect_args.test, "corpus")->required();
  inspect_cmd->add_option("--index", inspect_args.index, "0-based record index");
  inspect_cmd->add_option("--out", inspect_args.out, "JSON output");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "train + evaluate over a grid of one config key");
  sweep_args.common.attach(sweep_cmd);
  sweep_cmd->add_option("--train", sweep_args.train)->required();
  sweep_cmd->add_option("--dev", sweep_args.dev);
  sweep_cmd->add_option("--test", sweep_args.test);
  sweep_cmd->add_option("--grid", sweep_args.grid, "key=v1,v2,... e.g. pooling.p=30,50,100")->required();
  sweep_cmd->add_option("--out", sweep_args.out, "JSON results");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "cli: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out, err);
    if (predict_cmd->parsed()) return cmd_predict(predict_args, out, err);
    if (inspect_cmd->parsed()) return cmd_inspect_graph(inspect_args, out, err);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, out, err);
  } catch (const UsageError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace sgcn::cli
