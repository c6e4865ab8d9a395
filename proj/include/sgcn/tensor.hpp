#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgcn/errors.hpp"

namespace sgcn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::span<double> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor of doubles. Copies share storage; use clone() for a
/// deep copy. A tensor produced while a Tape is active (and depending on some
/// requires_grad input) is recorded on that tape.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                           std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{}, {value}, requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                       bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(data), requires_grad);
  }
  static Tensor vector(std::vector<double> data, bool requires_grad = false) {
    const auto n = data.size();
    return Tensor(Shape{n}, std::move(data), requires_grad);
  }
  static Tensor identity(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
    return t;
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::span<const double> data() const { return impl_->data; }
  // Writes bypass the tape; reserved for parameter updates and initialisation.
  std::span<double> mutable_data() const { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double item() const {
    if (numel() != 1) throw ContractError("tensor_core", "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * impl_->shape.at(1) + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) const { impl_->requires_grad = on; }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  // Zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const {
    return has_grad() ? impl_->grad : std::vector<double>(numel(), 0.0);
  }
  std::span<double> grad_buffer() const { return impl_->grad_buffer(); }
  void zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

  Tensor clone() const {
    Tensor t(shape(), impl_->data, impl_->requires_grad);
    return t;
  }

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Entries are appended in
/// execution order, so every entry's inputs were produced earlier on the
/// tape (or are leaves). backward() walks the entries in reverse once.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, BackwardFn backward) {
    if (done_) throw ContractError("tensor_core", "recording on a tape that already ran backward; call reset()");
    entries_.push_back({output.impl(), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  bool done() const { return done_; }

  void backward(Tensor loss) {
    if (done_) throw ContractError("tensor_core", "backward called twice on the same tape; call reset() first");
    if (loss.numel() != 1) {
      throw ContractError("tensor_core", "backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                           [&](const Entry& e) { return e.output.get() == loss.id(); });
    if (it == entries_.rend()) throw ContractError("tensor_core", "loss was not produced on this tape");
    done_ = true;
    loss.grad_buffer()[0] += 1.0;
    for (; it != entries_.rend(); ++it) {
      auto& out = *it->output;
      if (out.grad.size() != out.data.size()) continue;  // never reached
      it->backward(out.grad);
    }
  }

  void reset() {
    entries_.clear();
    done_ = false;
  }

  /// Tape that ops on the calling thread currently record into, or nullptr.
  static Tape*& active() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool done_ = false;
};

/// Makes `tape` the active tape for the enclosing scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds the result of an op. When a tape is active and any input requires
/// grad, the result requires grad and `backward` is recorded; otherwise the
/// result is a plain value.
template <class Backward>
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   Backward&& backward) {
  Tape* tape = Tape::active();
  bool track = tape != nullptr &&
               std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(data), track);
  if (track) tape->record(out, std::forward<Backward>(backward));
  return out;
}

template <class Backward>
Tensor make_result(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                   Backward&& backward) {
  Tape* tape = Tape::active();
  bool track = tape != nullptr &&
               std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(data), track);
  if (track) tape->record(out, std::forward<Backward>(backward));
  return out;
}

}  // namespace sgcn
