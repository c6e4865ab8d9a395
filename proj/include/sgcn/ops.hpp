#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sgcn/tensor.hpp"

// Differentiable operations over Tensor. Each op computes its value eagerly
// and, when a Tape is active, records the rule that maps the output gradient
// back onto its inputs.
namespace sgcn {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

inline void accumulate(const Tensor& t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto buf = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

enum class Broadcast { same, lhs_scalar, rhs_scalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::rhs_scalar;
  if (a.numel() == 1) return Broadcast::lhs_scalar;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
}

// Applies `f(x, y)` with scalar broadcasting; `dfdx`/`dfdy` give partials.
template <class F, class Dx, class Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, Dx dfdx, Dy dfdy) {
  const auto kind = broadcast_kind(a, b, name);
  const Shape shape = kind == Broadcast::lhs_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(shape);
  auto ai = [&, kind](std::size_t i) { return kind == Broadcast::lhs_scalar ? a[0] : a[i]; };
  auto bi = [&, kind](std::size_t i) { return kind == Broadcast::rhs_scalar ? b[0] : b[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  return make_result(shape, std::move(out), {a, b},
                     [a, b, kind, n, dfdx, dfdy](std::span<const double> g) mutable {
                       auto av = [&](std::size_t i) { return kind == Broadcast::lhs_scalar ? a[0] : a[i]; };
                       auto bv = [&](std::size_t i) { return kind == Broadcast::rhs_scalar ? b[0] : b[i]; };
                       if (a.requires_grad()) {
                         auto ga = a.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           ga[kind == Broadcast::lhs_scalar ? 0 : i] += g[i] * dfdx(av(i), bv(i));
                         }
                       }
                       if (b.requires_grad()) {
                         auto gb = b.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           gb[kind == Broadcast::rhs_scalar ? 0 : i] += g[i] * dfdy(av(i), bv(i));
                         }
                       }
                     });
}

// `dfdy_from_y` computes the derivative from the op's output value.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdy_from_y) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  auto y = out;
  return make_result(a.shape(), std::move(out), {a},
                     [a, y = std::move(y), dfdy_from_y](std::span<const double> g) mutable {
                       auto ga = a.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdy_from_y(a[i], y[i]);
                     });
}

// Splits `shape` around `axis` into (outer, axis extent, inner) for
// concatenation and slicing.
inline void split_axis(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ (" + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + ")");
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](std::span<const double> g) mutable {
    // dA = dZ * B^T, dB = A^T * dZ
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      const auto B = b.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      const auto A = a.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

enum class ElementwiseOp { add, mul, relu, sigmoid, tanh };

/// Dispatches to the named pointwise op. Binary ops take two arguments,
/// unary ops one.
inline Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args) {
  const std::size_t arity = (op == ElementwiseOp::add || op == ElementwiseOp::mul) ? 2 : 1;
  if (args.size() != arity) {
    throw ContractError("tensor_core", "elementwise: expected " + std::to_string(arity) + " arguments, got " +
                                           std::to_string(args.size()));
  }
  switch (op) {
    case ElementwiseOp::add: return add(args[0], args[1]);
    case ElementwiseOp::mul: return mul(args[0], args[1]);
    case ElementwiseOp::relu: return relu(args[0]);
    case ElementwiseOp::sigmoid: return sigmoid(args[0]);
    case ElementwiseOp::tanh: return tanh(args[0]);
  }
  return {};
}

inline Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("tensor_core", "concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " + shape_str(first));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                           " differ off axis " + std::to_string(axis));
    }
    shape[axis] += s[axis];
  }
  std::size_t outer, inner;
  detail::split_axis(shape, axis, outer, inner);
  const std::size_t row = shape[axis] * inner;
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + o * chunk, chunk, out.begin() + o * row + offset);
    offset += chunk;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(shape, std::move(out), parts,
                     [inputs, outer, inner, row, axis](std::span<const double> g) mutable {
                       std::size_t offset = 0;
                       for (auto& p : inputs) {
                         const std::size_t chunk = p.dim(axis) * inner;
                         if (p.requires_grad()) {
                           auto gp = p.grad_buffer();
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[o * row + offset + i];
                         }
                         offset += chunk;
                       }
                     });
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin > end || end > a.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for shape " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = end - begin;
  std::size_t outer, inner;
  detail::split_axis(a.shape(), axis, outer, inner);
  const std::size_t src_row = a.dim(axis) * inner;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t start = begin * inner;
  std::vector<double> out(outer * chunk);
  const auto src = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(src.begin() + o * src_row + start, chunk, out.begin() + o * chunk);
  return make_result(shape, std::move(out), {a}, [a, outer, chunk, src_row, start](std::span<const double> g) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < chunk; ++i) ga[o * src_row + start + i] += g[o * chunk + i];
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [a, m, n](std::span<const double> g) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_result(std::move(shape), a.values(), {a},
                     [a](std::span<const double> g) mutable { detail::accumulate(a, g); });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [a](std::span<const double> g) mutable {
    for (auto& v : a.grad_buffer()) v += g[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("tensor_core", "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

/// Sum of squares of all entries (squared Frobenius norm for matrices).
inline Tensor squared_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return make_result({}, {s}, {a}, [a](std::span<const double> g) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * a[i] * g[0];
  });
}

/// Rows of `table` selected by `ids`; repeated ids accumulate gradient.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  detail::require_matrix(table, "gather_rows");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  std::vector<double> out(ids.size() * cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[r]) + " out of range for table " +
                           shape_str(table.shape()));
    }
    std::copy_n(table.data().begin() + ids[r] * cols, cols, out.begin() + r * cols);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_result({ids.size(), cols}, std::move(out), {table},
                     [table, idx = std::move(idx), cols](std::span<const double> g) mutable {
                       auto gt = table.grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t c = 0; c < cols; ++c) gt[idx[r] * cols + c] += g[r * cols + c];
                     });
}

/// Appends zero rows so the matrix has `rows` rows.
inline Tensor pad_rows(const Tensor& a, std::size_t rows) {
  detail::require_matrix(a, "pad_rows");
  if (a.dim(0) > rows) {
    throw DimensionError("pad_rows: " + shape_str(a.shape()) + " already exceeds " + std::to_string(rows) + " rows");
  }
  std::vector<double> out(rows * a.dim(1), 0.0);
  std::copy(a.data().begin(), a.data().end(), out.begin());
  const std::size_t n = a.numel();
  return make_result({rows, a.dim(1)}, std::move(out), {a}, [a, n](std::span<const double> g) mutable {
    detail::accumulate(a, g.first(n));
  });
}

/// Numerically stable softmax of a flat vector.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= z;
  return p;
}

/// -log softmax(logits)[label] over a tensor holding C logits (any shape).
inline Tensor softmax_cross_entropy(const Tensor& logits, long label) {
  const auto c = static_cast<long>(logits.numel());
  if (label < 0 || label >= c) {
    throw LabelError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," + std::to_string(c) +
                     ")");
  }
  const auto x = logits.data();
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double loss = std::log(z) + mx - x[static_cast<std::size_t>(label)];
  auto probs = softmax(x);
  return make_result({}, {loss}, {logits},
                     [logits, probs = std::move(probs), label](std::span<const double> g) mutable {
                       auto gl = logits.grad_buffer();
                       for (std::size_t i = 0; i < probs.size(); ++i) {
                         gl[i] += g[0] * (probs[i] - (static_cast<long>(i) == label ? 1.0 : 0.0));
                       }
                     });
}

}  // namespace sgcn
