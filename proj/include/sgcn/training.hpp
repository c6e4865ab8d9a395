#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgcn/config.hpp"
#include "sgcn/corpus.hpp"
#include "sgcn/errors.hpp"
#include "sgcn/metrics.hpp"
#include "sgcn/model.hpp"
#include "sgcn/ops.hpp"
#include "sgcn/orthogonal.hpp"
#include "sgcn/tensor.hpp"

namespace sgcn {

/// mean_b CE(logits_b, label_b) + lambda_orth * sum_i ||W_i^T W_i - I||^2
///                              + lambda_l2   * sum_i ||W_i||^2
inline Tensor total_loss(std::span<const Tensor> logits, std::span<const int> labels, std::span<const Tensor> weights,
                         double lambda_orth, double lambda_l2) {
  if (logits.size() != labels.size()) {
    throw ContractError("training", "total_loss: " + std::to_string(logits.size()) + " logits for " +
                                        std::to_string(labels.size()) + " labels");
  }
  if (logits.empty()) throw ContractError("training", "total_loss: empty batch");
  Tensor ce = softmax_cross_entropy(logits[0], labels[0]);
  for (std::size_t i = 1; i < logits.size(); ++i) ce = add(ce, softmax_cross_entropy(logits[i], labels[i]));
  Tensor loss = scale(ce, 1.0 / static_cast<double>(logits.size()));
  if (lambda_orth != 0.0) {
    for (const auto& w : weights) loss = add(loss, scale(orthogonality_penalty(w), lambda_orth));
  }
  if (lambda_l2 != 0.0) {
    for (const auto& w : weights) loss = add(loss, scale(squared_norm(w), lambda_l2));
  }
  return loss;
}

/// Adam with decoupled weight decay:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * w)
/// Frozen rows receive no update at all.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options options) : options_(options) {}

  std::size_t steps() const { return step_; }

  void step(std::span<NamedParam> params) {
    // Refuse the whole step before touching anything.
    for (auto& p : params) {
      for (double g : p.tensor.grad()) {
        if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
      }
    }
    if (moments_.empty()) {
      for (auto& p : params) moments_.push_back({std::vector<double>(p.tensor.numel(), 0.0),
                                                 std::vector<double>(p.tensor.numel(), 0.0)});
    }
    if (moments_.size() != params.size()) throw ContractError("training", "adam: parameter list changed between steps");
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      auto& [m, v] = moments_[k];
      if (m.size() != p.tensor.numel()) throw ContractError("training", "adam: state shape mismatch for " + p.name);
      const auto g = p.tensor.grad();
      auto w = p.tensor.mutable_data();
      const std::size_t cols = p.tensor.rank() == 2 ? p.tensor.dim(1) : p.tensor.numel();
      std::vector<bool> frozen(p.tensor.numel() / std::max<std::size_t>(cols, 1), false);
      for (auto r : p.frozen_rows) if (r < frozen.size()) frozen[r] = true;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (frozen[i / cols]) continue;
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= options_.learning_rate * (mhat / (std::sqrt(vhat) + options_.eps) + options_.weight_decay * w[i]);
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  Options options_;
  std::vector<Moments> moments_;
  std::size_t step_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double dev_macro_f = 0.0;
  double dev_micro_f = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"train_loss", train_loss},
            {"train_accuracy", train_accuracy},
            {"dev_macro_f", dev_macro_f},
            {"dev_micro_f", dev_micro_f}};
  }
};

struct TrainResult {
  Model model;  // best-dev model (final model when there is no dev set)
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

inline EvalReport evaluate_model(Model& model, std::span<const Example> examples) {
  std::vector<int> gold;
  gold.reserve(examples.size());
  for (const auto& e : examples) gold.push_back(e.label);
  const auto pred = model.predict(examples);
  return evaluate(pred, gold, model.config.classes);
}

/// Mini-batch training. The vocabulary comes from `train_records` only;
/// batches are reshuffled each epoch from the seeded generator, so the run is
/// a pure function of (config, corpora).
inline TrainResult train(const TrainConfig& config, const std::vector<Record>& train_records,
                         const std::vector<Record>& dev_records,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  config.validate();
  if (train_records.empty()) throw ConfigError("training corpus is empty");
  for (const auto& r : train_records) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= config.classes) {
      throw ConfigError("training record without a label in [0," + std::to_string(config.classes) + ")");
    }
  }

  Rng rng(config.seed);
  Model model = Model::create(config, build_vocab(train_records, config.min_count), rng);
  const auto train_ex = make_examples(train_records, model.vocab, config);
  const auto dev_ex = make_examples(dev_records, model.vocab, config);

  Adam adam({config.learning_rate, config.weight_decay});
  auto params = model.parameters();

  TrainResult result;
  double best_dev = -1.0;
  std::vector<std::size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Example*> batch;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_ex[order[i]]);
        labels.push_back(train_ex[order[i]].label);
      }
      model.zero_grad();
      Tape tape;
      {
        TapeScope scope(tape);
        const auto logits = model.forward(batch, Mode::train, &rng);
        const auto weights = model.regularized_weights();
        Tensor loss = total_loss(logits, labels, weights, config.lambda_orth, config.lambda_l2);
        loss_sum += loss.item();
        tape.backward(loss);
      }
      adam.step(params);
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.train_accuracy = evaluate_model(model, train_ex).micro.f;
    if (!dev_ex.empty()) {
      const auto rep = evaluate_model(model, dev_ex);
      stats.dev_macro_f = rep.macro.f;
      stats.dev_micro_f = rep.micro.f;
      if (rep.macro.f > best_dev) {
        best_dev = rep.macro.f;
        result.model = model.clone();
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  if (dev_ex.empty()) {
    result.model = model.clone();
    result.best_epoch = config.epochs;
  }
  return result;
}

inline std::string history_jsonl(const TrainConfig& config, const TrainResult& result) {
  std::string out = nlohmann::json{{"type", "config"}, {"config", config.to_json()}}.dump() + "\n";
  for (const auto& e : result.history) {
    auto j = e.to_json();
    j["type"] = "epoch";
    out += j.dump() + "\n";
  }
  out += nlohmann::json{{"type", "best"}, {"epoch", result.best_epoch}}.dump() + "\n";
  return out;
}

}  // namespace sgcn
