#pragma once

#include <cstddef>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgcn/errors.hpp"

namespace sgcn {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

struct ClassStats {
  std::size_t gold = 0;
  std::size_t proposed = 0;
  std::size_t correct = 0;
  Prf prf;
};

struct EvalReport {
  std::vector<ClassStats> per_class;
  Prf macro;
  Prf micro;
  std::size_t samples = 0;

  std::size_t classes() const { return per_class.size(); }
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace detail {

inline void check_labels(std::span<const int> pred, std::span<const int> gold, std::size_t classes) {
  if (pred.size() != gold.size()) {
    throw ContractError("metrics", "prediction count " + std::to_string(pred.size()) + " != gold count " +
                                       std::to_string(gold.size()));
  }
  auto in_range = [classes](int c) { return c >= 0 && static_cast<std::size_t>(c) < classes; };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!in_range(pred[i]) || !in_range(gold[i])) {
      throw ContractError("metrics", "class id out of range at sample " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Row = gold class, column = predicted class.
inline ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> gold, std::size_t classes) {
  detail::check_labels(pred, gold, classes);
  ConfusionMatrix m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++m[gold[i]][pred[i]];
  return m;
}

/// Per-class, macro and micro precision/recall/F. Macro P and R average the
/// per-class ratios over all C classes (an empty class contributes 0); macro
/// F combines macro P and macro R. Micro figures pool the counts.
inline EvalReport evaluate(std::span<const int> pred, std::span<const int> gold, std::size_t classes) {
  detail::check_labels(pred, gold, classes);
  EvalReport rep;
  rep.samples = pred.size();
  rep.per_class.resize(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++rep.per_class[gold[i]].gold;
    ++rep.per_class[pred[i]].proposed;
    if (pred[i] == gold[i]) ++rep.per_class[gold[i]].correct;
  }
  double sum_p = 0.0, sum_r = 0.0, correct = 0.0, proposed = 0.0, golds = 0.0;
  for (auto& c : rep.per_class) {
    c.prf.precision = safe_ratio(static_cast<double>(c.correct), static_cast<double>(c.proposed));
    c.prf.recall = safe_ratio(static_cast<double>(c.correct), static_cast<double>(c.gold));
    c.prf.f = f_measure(c.prf.precision, c.prf.recall);
    sum_p += c.prf.precision;
    sum_r += c.prf.recall;
    correct += static_cast<double>(c.correct);
    proposed += static_cast<double>(c.proposed);
    golds += static_cast<double>(c.gold);
  }
  if (classes > 0) {
    rep.macro.precision = sum_p / static_cast<double>(classes);
    rep.macro.recall = sum_r / static_cast<double>(classes);
  }
  rep.macro.f = f_measure(rep.macro.precision, rep.macro.recall);
  rep.micro.precision = safe_ratio(correct, proposed);
  rep.micro.recall = safe_ratio(correct, golds);
  rep.micro.f = f_measure(rep.micro.precision, rep.micro.recall);
  return rep;
}

inline nlohmann::json to_json(const EvalReport& rep, const std::vector<std::string>& names) {
  auto prf = [](const Prf& p) { return nlohmann::json{{"precision", p.precision}, {"recall", p.recall}, {"f", p.f}}; };
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    const auto& s = rep.per_class[c];
    auto row = prf(s.prf);
    row["class"] = c < names.size() ? names[c] : std::to_string(c);
    row["gold"] = s.gold;
    row["proposed"] = s.proposed;
    row["correct"] = s.correct;
    classes.push_back(row);
  }
  return {{"samples", rep.samples}, {"classes", classes}, {"micro", prf(rep.micro)}, {"macro", prf(rep.macro)}};
}

/// Aligned text table: one row per class, then micro and macro averages.
inline std::string format_table(const EvalReport& rep, const std::vector<std::string>& names) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-15s %9s %9s %9s\n", "", "Precision", "Recall", "F1-score");
  os << buf;
  auto row = [&](const std::string& name, const Prf& p) {
    std::snprintf(buf, sizeof buf, "%-15s %9.4f %9.4f %9.4f\n", name.c_str(), p.precision, p.recall, p.f);
    os << buf;
  };
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    row(c < names.size() ? names[c] : std::to_string(c), rep.per_class[c].prf);
  }
  row("Micro Average", rep.micro);
  row("Macro Average", rep.macro);
  return os.str();
}

}  // namespace sgcn
