#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nbnet/common.hpp"

namespace nbnet {

namespace runtime_checks {
// Scan every op output for NaN/Inf. On by default; forward ops must never
// propagate non-finite values silently.
inline std::atomic<bool> finite_checks{true};
// When false, ops skip autograd recording (inference paths).
inline std::atomic<bool> grad_enabled{true};
}  // namespace runtime_checks

/// RAII scope that disables autograd recording.
class NoGradGuard {
 public:
  NoGradGuard()
      : prev_(runtime_checks::grad_enabled.exchange(false,
                                                    std::memory_order_relaxed)) {}
  ~NoGradGuard() {
    runtime_checks::grad_enabled.store(prev_, std::memory_order_relaxed);
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// N-dimensional array of T plus the reverse-mode autograd record.
// Ops producing a tensor attach a node (parents + vector-Jacobian rule);
// GradTape::backward replays nodes in exact reverse execution order.
// Values are immutable once an op has produced them.
template <typename T>
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::shared_ptr<std::vector<T>> values;
    std::vector<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    // autograd node (set only for op outputs with a differentiable input)
    int64_t seq = -1;
    bool visited_mark = false;
    std::vector<std::shared_ptr<Impl>> parents;
    std::function<void(Impl&)> vjp;  // reads own grad, accumulates parents'

    void accumulate(std::span<const T> g) {
      if (grad.empty()) grad.assign(values->size(), T(0));
      for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
    std::span<T> grad_buffer() {
      if (grad.empty()) grad.assign(values->size(), T(0));
      return grad;
    }
  };

  Tensor() : impl_(nullptr) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->values =
        std::make_shared<std::vector<T>>(nbnet::numel(t.impl_->shape), value);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false) {
    check(nbnet::numel(shape) == static_cast<int64_t>(data.size()),
          "tensor data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::make_shared<std::vector<T>>(std::move(data));
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  /// View over an existing buffer (used by reshape; no copy).
  static Tensor view_of(Shape shape, std::shared_ptr<std::vector<T>> values) {
    check(nbnet::numel(shape) == static_cast<int64_t>(values->size()),
          "view_of: buffer length does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->values = std::move(values);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->values->size()); }

  std::span<const T> data() const { return *impl_->values; }
  /// Writable view; only valid for leaves that no op has consumed yet.
  std::span<T> mutable_data() { return *impl_->values; }

  T item() const {
    check(numel() == 1, "item() on non-scalar tensor " + shape_str(shape()));
    return (*impl_->values)[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  std::shared_ptr<Impl> impl() const { return impl_; }

  /// Deep copy of values only (no autograd history).
  Tensor detached_copy() const {
    return from_data(shape(), std::vector<T>(data().begin(), data().end()));
  }

  bool all_finite() const {
    for (T v : *impl_->values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  std::shared_ptr<Impl> impl_;
};

namespace detail {
inline std::atomic<int64_t> op_sequence{0};
}

// Attaches an autograd node to `out`. `vjp` must add d(out)-contributions
// into each parent's grad buffer. Gradients therefore accumulate additively
// when a tensor feeds multiple consumers.
template <typename T>
void record_op(Tensor<T>& out, std::vector<Tensor<T>> parents,
               std::function<void(typename Tensor<T>::Impl&)> vjp) {
  if (runtime_checks::finite_checks.load(std::memory_order_relaxed) &&
      !out.all_finite()) {
    throw NumericalError("operation produced a non-finite value");
  }
  if (!runtime_checks::grad_enabled.load(std::memory_order_relaxed)) return;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return;
  auto impl = out.impl();
  impl->requires_grad = true;
  impl->seq = detail::op_sequence.fetch_add(1, std::memory_order_relaxed);
  impl->parents.reserve(parents.size());
  for (auto& p : parents) impl->parents.push_back(p.impl());
  impl->vjp = std::move(vjp);
}

// Reverse pass from a scalar loss: collect the reachable subgraph, order it
// by descending sequence number (exact reverse execution order), run vjps.
template <typename T>
class GradTape {
 public:
  static void backward(const Tensor<T>& loss) {
    check(loss.numel() == 1, "backward() expects a scalar loss");
    using Impl = typename Tensor<T>::Impl;
    std::vector<Impl*> nodes;
    std::vector<Impl*> stack{loss.impl().get()};
    while (!stack.empty()) {
      Impl* n = stack.back();
      stack.pop_back();
      if (n->seq < 0 || n->visited_mark) continue;
      n->visited_mark = true;
      nodes.push_back(n);
      for (auto& p : n->parents) stack.push_back(p.get());
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Impl* a, const Impl* b) { return a->seq > b->seq; });
    loss.impl()->grad.assign(1, T(1));
    for (Impl* n : nodes) {
      if (!n->grad.empty() && n->vjp) n->vjp(*n);
      n->visited_mark = false;
    }
  }
};

template <typename T>
void backward(const Tensor<T>& loss) {
  GradTape<T>::backward(loss);
}

}  // namespace nbnet
