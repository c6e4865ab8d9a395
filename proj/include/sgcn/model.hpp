#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgcn/config.hpp"
#include "sgcn/corpus.hpp"
#include "sgcn/layers.hpp"
#include "sgcn/ops.hpp"
#include "sgcn/tensor.hpp"

namespace sgcn {

/// A record prepared for the network: token ids, the real-token block of the
/// normalized adjacency, and the label (-1 if unknown).
struct Example {
  std::vector<std::size_t> ids;
  Tensor a_hat;
  int label = -1;
};

inline Example make_example(const Record& rec, const Vocabulary& vocab, AdjacencyMode mode, std::size_t max_len) {
  return {vocab.encode(rec.tokens), build_graph(rec, mode, max_len).normalized_block(), rec.label};
}

inline std::vector<Example> make_examples(const std::vector<Record>& records, const Vocabulary& vocab,
                                          const TrainConfig& config) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_example(r, vocab, config.adjacency_mode, config.max_len));
  return out;
}

struct NamedParam {
  std::string name;
  Tensor tensor;
  std::vector<std::size_t> frozen_rows;  // rows the optimiser must not touch
};

/// Embedding -> stacked Bi-LSTM (+ batch norm, dropout) -> GCN -> pooling or
/// fully connected head -> C logits.
class Model {
 public:
  TrainConfig config;
  Vocabulary vocab;
  EmbeddingTable embedding;
  BiLstm encoder;
  GcnLayer gcn_layer;
  std::optional<FcHead> fc;

  static Model create(const TrainConfig& config, Vocabulary vocab, Rng& rng) {
    config.validate();
    Model m;
    m.config = config;
    m.vocab = std::move(vocab);
    m.embedding = EmbeddingTable::create(m.vocab.size(), config.embedding_size, rng);
    m.encoder = BiLstm::create(config.embedding_size, config.hidden_neurons, config.lstm_layers, config.dropout,
                               config.batch_norm, rng);
    m.gcn_layer = GcnLayer::create(2 * config.hidden_neurons, config.classes, rng);
    if (config.pooling.kind == PoolingKind::fc) m.fc = FcHead::create(config.max_len, config.classes, rng);
    return m;
  }

  /// Visits every trainable tensor as f(name, tensor&, frozen_rows).
  template <class F>
  void for_each_param(F&& f) {
    f("embedding.weight", embedding.weight, std::vector<std::size_t>{Vocabulary::kPad});
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
      for (auto dir : {0, 1}) {
        auto& cell = dir == 0 ? encoder.layers[l].forward_cell : encoder.layers[l].backward_cell;
        const std::string prefix = "lstm." + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
        for (int g = 0; g < 4; ++g) {
          const std::string gate = LstmCell::kGateNames[g];
          f(prefix + "w_" + gate, cell.w[g], std::vector<std::size_t>{});
          f(prefix + "u_" + gate, cell.u[g], std::vector<std::size_t>{});
          f(prefix + "b_" + gate, cell.b[g], std::vector<std::size_t>{});
        }
      }
    }
    if (config.batch_norm) {
      f("bn.gamma", encoder.norm.gamma, std::vector<std::size_t>{});
      f("bn.beta", encoder.norm.beta, std::vector<std::size_t>{});
    }
    f("gcn.theta", gcn_layer.theta, std::vector<std::size_t>{});
    if (fc) {
      f("fc.weight", fc->weight, std::vector<std::size_t>{});
      f("fc.bias", fc->bias, std::vector<std::size_t>{});
    }
  }

  std::vector<NamedParam> parameters() {
    std::vector<NamedParam> out;
    for_each_param([&](const std::string& name, Tensor& t, std::vector<std::size_t> frozen) {
      out.push_back({name, t, std::move(frozen)});
    });
    return out;
  }

  /// Bi-LSTM input/recurrent matrices and Theta: the matrices that carry the
  /// orthogonality and L2 penalties.
  std::vector<Tensor> regularized_weights() const {
    std::vector<Tensor> out;
    for (const auto& layer : encoder.layers) {
      for (const auto* cell : {&layer.forward_cell, &layer.backward_cell}) {
        for (int g = 0; g < 4; ++g) {
          out.push_back(cell->w[g]);
          out.push_back(cell->u[g]);
        }
      }
    }
    out.push_back(gcn_layer.theta);
    return out;
  }

  void zero_grad() {
    for_each_param([](const std::string&, Tensor& t, const std::vector<std::size_t>&) { t.zero_grad(); });
  }

  /// Deep copy; the result shares no storage with *this.
  Model clone() const {
    Model copy = *this;
    copy.for_each_param([](const std::string&, Tensor& t, const std::vector<std::size_t>&) { t = t.clone(); });
    if (!config.batch_norm) {
      copy.encoder.norm.gamma = encoder.norm.gamma.clone();
      copy.encoder.norm.beta = encoder.norm.beta.clone();
    }
    return copy;
  }

  Tensor pool(const Tensor& z) const {
    switch (config.pooling.kind) {
      case PoolingKind::percentile: return percentile_pool(z, config.pooling.p);
      case PoolingKind::average: return average_pool(z);
      case PoolingKind::fc: return fc_head(z, *fc);
    }
    return {};
  }

  /// Logits ([C]) for each example. In training mode batch-norm statistics
  /// are shared across the batch and `rng` drives dropout.
  std::vector<Tensor> forward(std::span<const Example* const> batch, Mode mode, Rng* rng) {
    std::vector<Tensor> xs;
    xs.reserve(batch.size());
    for (const auto* ex : batch) xs.push_back(embed(ex->ids, embedding));
    auto features = encoder.forward(xs, mode, rng);
    std::vector<Tensor> logits;
    logits.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      logits.push_back(pool(gcn(features[i], batch[i]->a_hat, gcn_layer)));
    }
    return logits;
  }

  /// Evaluation-mode logits for many examples.
  std::vector<std::vector<double>> logits(std::span<const Example> examples, std::size_t chunk = 64) {
    std::vector<std::vector<double>> out;
    out.reserve(examples.size());
    std::vector<const Example*> batch;
    for (std::size_t start = 0; start < examples.size(); start += chunk) {
      batch.clear();
      for (std::size_t i = start; i < std::min(examples.size(), start + chunk); ++i) batch.push_back(&examples[i]);
      for (const auto& l : forward(batch, Mode::eval, nullptr)) out.push_back(l.values());
    }
    return out;
  }

  std::vector<int> predict(std::span<const Example> examples) {
    std::vector<int> out;
    for (const auto& l : logits(examples)) {
      out.push_back(static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin()));
    }
    return out;
  }
};

}  // namespace sgcn
