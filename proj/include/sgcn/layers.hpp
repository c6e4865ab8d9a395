#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgcn/corpus.hpp"
#include "sgcn/errors.hpp"
#include "sgcn/ops.hpp"
#include "sgcn/orthogonal.hpp"
#include "sgcn/tensor.hpp"

namespace sgcn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Embedding

struct EmbeddingTable {
  Tensor weight;  // [vocab, dim]; row Vocabulary::kPad stays zero

  static EmbeddingTable create(std::size_t vocab_size, std::size_t dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(vocab_size * dim);
    for (auto& v : w) v = normal(rng);
    std::fill_n(w.begin() + Vocabulary::kPad * dim, dim, 0.0);
    return {Tensor::matrix(vocab_size, dim, std::move(w), true)};
  }

  std::size_t dim() const { return weight.dim(1); }
};

inline Tensor embed(std::span<const std::size_t> ids, const EmbeddingTable& table) {
  return gather_rows(table.weight, ids);
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout: kept units are scaled by 1/(1-rate) so evaluation is the
/// identity.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng* rng) {
  if (mode == Mode::eval || rate <= 0.0 || rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  const double s = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = keep(*rng) ? s : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// LSTM

/// Standard LSTM cell with separate input, forget, output and candidate gate
/// weights. Gate pre-activations are x W_g + h U_g + b_g.
struct LstmCell {
  enum Gate { input = 0, forget = 1, output = 2, candidate = 3 };
  static constexpr std::array<const char*, 4> kGateNames = {"input", "forget", "output", "candidate"};

  std::array<Tensor, 4> w;  // [in, h]
  std::array<Tensor, 4> u;  // [h, h]
  std::array<Tensor, 4> b;  // [1, h]

  static LstmCell create(std::size_t input_size, std::size_t hidden, Rng& rng) {
    LstmCell cell;
    for (int g = 0; g < 4; ++g) {
      cell.w[g] = Tensor::matrix(input_size, hidden, orth_init(input_size, hidden, rng), true);
      cell.u[g] = Tensor::matrix(hidden, hidden, orth_init(hidden, hidden, rng), true);
      cell.b[g] = Tensor::zeros({1, hidden}, true);
    }
    std::fill(cell.b[forget].mutable_data().begin(), cell.b[forget].mutable_data().end(), 1.0);
    return cell;
  }

  std::size_t input_size() const { return w[0].dim(0); }
  std::size_t hidden() const { return w[0].dim(1); }

  /// Runs over the rows of x ([n, in]) left to right, or right to left when
  /// `reverse`. Row t of the result is the hidden state after reading row t.
  Tensor run(const Tensor& x, bool reverse) const {
    if (x.rank() != 2 || x.dim(1) != input_size()) {
      throw DimensionError("lstm: input " + shape_str(x.shape()) + " does not match input size " +
                           std::to_string(input_size()));
    }
    const std::size_t n = x.dim(0), h = hidden();
    const Tensor W = concat(std::span<const Tensor>(w), 1);
    const Tensor U = concat(std::span<const Tensor>(u), 1);
    const Tensor B = concat(std::span<const Tensor>(b), 1);
    const Tensor xw = matmul(x, W);
    Tensor hs = Tensor::zeros({1, h});
    Tensor cs = Tensor::zeros({1, h});
    std::vector<Tensor> outs(n);
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t t = reverse ? n - 1 - step : step;
      const Tensor z = add(add(slice(xw, 0, t, t + 1), matmul(hs, U)), B);
      const Tensor ig = sigmoid(slice(z, 1, 0, h));
      const Tensor fg = sigmoid(slice(z, 1, h, 2 * h));
      const Tensor og = sigmoid(slice(z, 1, 2 * h, 3 * h));
      const Tensor cand = tanh(slice(z, 1, 3 * h, 4 * h));
      cs = add(mul(fg, cs), mul(ig, cand));
      hs = mul(og, tanh(cs));
      outs[t] = hs;
    }
    return concat(std::span<const Tensor>(outs), 0);
  }
};

struct BiLstmLayer {
  LstmCell forward_cell;
  LstmCell backward_cell;

  static BiLstmLayer create(std::size_t input_size, std::size_t hidden, Rng& rng) {
    auto f = LstmCell::create(input_size, hidden, rng);
    auto b = LstmCell::create(input_size, hidden, rng);
    return {std::move(f), std::move(b)};
  }

  /// [n, in] -> [n, 2h]: forward states then backward states per row.
  Tensor forward(const Tensor& x) const {
    return concat(forward_cell.run(x, false), backward_cell.run(x, true), 1);
  }
};

// ---------------------------------------------------------------------------
// Batch normalisation

/// Normalises each feature column over all rows. Training uses the batch
/// statistics (biased variance) and updates running estimates; evaluation
/// uses the running estimates.
struct BatchNorm {
  Tensor gamma;  // [1, F]
  Tensor beta;   // [1, F]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm create(std::size_t features) {
    BatchNorm bn;
    bn.gamma = Tensor::full({1, features}, 1.0);
    bn.gamma.set_requires_grad(true);
    bn.beta = Tensor::zeros({1, features}, true);
    bn.running_mean.assign(features, 0.0);
    bn.running_var.assign(features, 1.0);
    return bn;
  }

  std::size_t features() const { return gamma.dim(1); }

  Tensor forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.dim(1) != features()) {
      throw DimensionError("batch_norm: input " + shape_str(x.shape()) + " does not have " +
                           std::to_string(features()) + " features");
    }
    const std::size_t rows = x.dim(0), f = features();
    if (mode == Mode::eval) return apply_running(x);
    if (rows == 0) throw ContractError("layers", "batch_norm: empty batch");

    std::vector<double> mu(f, 0.0), var(f, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f; ++c) mu[c] += x[r * f + c];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = x[r * f + c] - mu[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);

    std::vector<double> inv_std(f), xhat(rows * f), out(rows * f);
    for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const std::size_t i = r * f + c;
        xhat[i] = (x[i] - mu[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
      }

    for (std::size_t c = 0; c < f; ++c) {
      const double unbiased = rows > 1 ? var[c] * static_cast<double>(rows) / static_cast<double>(rows - 1) : var[c];
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
    }

    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [x, g = gamma, bt = beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                        f](std::span<const double> dy) mutable {
                         std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < f; ++c) {
                             sum_dy[c] += dy[r * f + c];
                             sum_dy_xhat[c] += dy[r * f + c] * xhat[r * f + c];
                           }
                         if (g.requires_grad()) {
                           auto gg = g.grad_buffer();
                           for (std::size_t c = 0; c < f; ++c) gg[c] += sum_dy_xhat[c];
                         }
                         if (bt.requires_grad()) {
                           auto gb = bt.grad_buffer();
                           for (std::size_t c = 0; c < f; ++c) gb[c] += sum_dy[c];
                         }
                         if (x.requires_grad()) {
                           auto gx = x.grad_buffer();
                           const double inv_n = 1.0 / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < f; ++c) {
                               const std::size_t i = r * f + c;
                               gx[i] += g[c] * inv_std[c] * inv_n *
                                        (static_cast<double>(rows) * dy[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
                             }
                         }
                       });
  }

 private:
  Tensor apply_running(const Tensor& x) const {
    const std::size_t f = features();
    std::vector<double> s(f), shift(f);
    for (std::size_t c = 0; c < f; ++c) {
      s[c] = 1.0 / std::sqrt(running_var[c] + eps);
      shift[c] = -running_mean[c] * s[c];
    }
    // y = (x * s + shift) * gamma + beta, expressed row-wise so gamma/beta
    // still receive gradients if evaluated under a tape.
    const std::size_t rows = x.dim(0);
    std::vector<double> srep(rows * f), hrep(rows * f);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(s.begin(), s.end(), srep.begin() + r * f);
      std::copy(shift.begin(), shift.end(), hrep.begin() + r * f);
    }
    std::vector<std::size_t> zeros(rows, 0);
    const Tensor normed = add(mul(x, Tensor(x.shape(), std::move(srep))), Tensor(x.shape(), std::move(hrep)));
    return add(mul(normed, gather_rows(gamma, zeros)), gather_rows(beta, zeros));
  }
};

// ---------------------------------------------------------------------------
// Stacked Bi-LSTM encoder

/// Stacked Bi-LSTM followed by batch normalisation of the output features.
/// Dropout sits between stacked layers and on the final output.
struct BiLstm {
  std::vector<BiLstmLayer> layers;
  BatchNorm norm;
  double dropout_rate = 0.5;
  bool use_batch_norm = true;

  static BiLstm create(std::size_t input_size, std::size_t hidden, std::size_t num_layers, double dropout_rate,
                       bool use_batch_norm, Rng& rng) {
    if (num_layers == 0) throw ContractError("layers", "bilstm needs at least one layer");
    BiLstm net;
    for (std::size_t l = 0; l < num_layers; ++l) {
      net.layers.push_back(BiLstmLayer::create(l == 0 ? input_size : 2 * hidden, hidden, rng));
    }
    net.norm = BatchNorm::create(2 * hidden);
    net.dropout_rate = dropout_rate;
    net.use_batch_norm = use_batch_norm;
    return net;
  }

  std::size_t hidden() const { return layers.front().forward_cell.hidden(); }
  std::size_t output_size() const { return 2 * hidden(); }

  /// Recurrent part only: [n, d] -> [n, 2h].
  Tensor encode(const Tensor& x, Mode mode, Rng* rng) const {
    if (x.rank() != 2 || x.dim(0) == 0) throw ContractError("layers", "bilstm: need at least one token");
    Tensor h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (l > 0) h = dropout(h, dropout_rate, mode, rng);
      h = layers[l].forward(h);
    }
    return h;
  }

  /// Encodes every sequence of a batch. Batch-norm statistics are taken over
  /// all positions of all sequences.
  std::vector<Tensor> forward(std::span<const Tensor> xs, Mode mode, Rng* rng) {
    std::vector<Tensor> encoded;
    encoded.reserve(xs.size());
    for (const auto& x : xs) encoded.push_back(encode(x, mode, rng));
    if (encoded.empty()) return encoded;

    if (use_batch_norm) {
      const Tensor stacked = encoded.size() == 1 ? encoded[0] : concat(std::span<const Tensor>(encoded), 0);
      const Tensor normed = norm.forward(stacked, mode);
      std::size_t row = 0;
      for (auto& e : encoded) {
        const std::size_t n = e.dim(0);
        e = encoded.size() == 1 ? normed : slice(normed, 0, row, row + n);
        row += n;
      }
    }
    for (auto& e : encoded) e = dropout(e, dropout_rate, mode, rng);
    return encoded;
  }

  Tensor forward(const Tensor& x, Mode mode, Rng* rng) {
    const Tensor xs[] = {x};
    return forward(std::span<const Tensor>(xs), mode, rng).front();
  }
};

// ---------------------------------------------------------------------------
// Graph convolution

struct GcnLayer {
  Tensor theta;  // [2h, C]

  static GcnLayer create(std::size_t input_size, std::size_t classes, Rng& rng) {
    return {Tensor::matrix(input_size, classes, orth_init(input_size, classes, rng), true)};
  }
};

/// Z = ReLU(A_hat L Theta) over the real-token block A_hat ([n, n]).
inline Tensor gcn(const Tensor& features, const Tensor& a_hat, const GcnLayer& layer) {
  if (a_hat.rank() != 2 || a_hat.dim(0) != a_hat.dim(1) || features.rank() != 2 ||
      a_hat.dim(0) != features.dim(0)) {
    throw DimensionError("gcn: adjacency " + shape_str(a_hat.shape()) + " does not match features " +
                         shape_str(features.shape()));
  }
  return relu(matmul(a_hat, matmul(features, layer.theta)));
}

inline Tensor gcn(const Tensor& features, const GraphMatrices& graph, const GcnLayer& layer) {
  return gcn(features, graph.normalized_block(), layer);
}

// ---------------------------------------------------------------------------
// Pooling heads

/// 1-based nearest rank of the p-th percentile among n values.
inline std::size_t percentile_rank(double p, std::size_t n) {
  const double k = std::ceil(p * static_cast<double>(n) / 100.0);
  return std::clamp<std::size_t>(k < 1.0 ? 1 : static_cast<std::size_t>(k), 1, n);
}

/// Column-wise nearest-rank percentile of Z ([n, C]) -> [C]. p = 100 is max
/// pooling and p = 50 the median for odd n. The gradient of each output goes
/// to the selected element; among equal values the lowest row wins.
inline Tensor percentile_pool(const Tensor& z, double p) {
  if (z.rank() != 2 || z.dim(0) == 0) throw ContractError("layers", "percentile_pool: need at least one row");
  if (!(p >= 0.0 && p <= 100.0)) throw ContractError("layers", "percentile_pool: p must lie in [0,100]");
  const std::size_t n = z.dim(0), c = z.dim(1);
  const std::size_t rank = percentile_rank(p, n);
  std::vector<double> out(c);
  std::vector<std::size_t> chosen(c);
  std::vector<std::size_t> order(n);
  for (std::size_t col = 0; col < c; ++col) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return z[a * c + col] < z[b * c + col]; });
    const double v = z[order[rank - 1] * c + col];
    std::size_t row = order[rank - 1];
    for (std::size_t r = 0; r < n; ++r) {
      if (z[r * c + col] == v) {
        row = r;
        break;
      }
    }
    out[col] = v;
    chosen[col] = row;
  }
  return make_result({c}, std::move(out), {z}, [z, chosen = std::move(chosen), c](std::span<const double> g) mutable {
    auto gz = z.grad_buffer();
    for (std::size_t col = 0; col < c; ++col) gz[chosen[col] * c + col] += g[col];
  });
}

/// Column means of Z ([n, C]) -> [C].
inline Tensor average_pool(const Tensor& z) {
  if (z.rank() != 2 || z.dim(0) == 0) throw ContractError("layers", "average_pool: need at least one row");
  const std::size_t n = z.dim(0), c = z.dim(1);
  std::vector<double> out(c, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < c; ++col) out[col] += z[r * c + col];
  for (auto& v : out) v /= static_cast<double>(n);
  return make_result({c}, std::move(out), {z}, [z, n, c](std::span<const double> g) mutable {
    auto gz = z.grad_buffer();
    const double s = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t col = 0; col < c; ++col) gz[r * c + col] += g[col] * s;
  });
}

/// Fully connected head: zero-pads Z to max_len rows, flattens, and maps the
/// max_len*C vector to C logits.
struct FcHead {
  Tensor weight;  // [max_len * C, C]
  Tensor bias;    // [1, C]

  static FcHead create(std::size_t max_len, std::size_t classes, Rng& rng) {
    const std::size_t fan_in = max_len * classes;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::vector<double> w(fan_in * classes);
    for (auto& v : w) v = uni(rng);
    return {Tensor::matrix(fan_in, classes, std::move(w), true), Tensor::zeros({1, classes}, true)};
  }

  std::size_t classes() const { return weight.dim(1); }
  std::size_t max_len() const { return weight.dim(0) / classes(); }
};

inline Tensor fc_head(const Tensor& z, const FcHead& head) {
  const std::size_t c = head.classes();
  if (z.rank() != 2 || z.dim(1) != c) {
    throw DimensionError("fc_head: input " + shape_str(z.shape()) + " does not have " + std::to_string(c) + " columns");
  }
  if (z.dim(0) > head.max_len()) {
    throw ContractError("layers", "fc_head: " + std::to_string(z.dim(0)) + " rows exceed max_len " +
                                      std::to_string(head.max_len()));
  }
  const Tensor flat = reshape(pad_rows(z, head.max_len()), {1, head.max_len() * c});
  return reshape(add(matmul(flat, head.weight), head.bias), {c});
}

}  // namespace sgcn
