#pragma once

#include <string>
#include <vector>

#include "nbnet/ops.hpp"
#include "nbnet/rng.hpp"

namespace nbnet {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

/// He-style fan-in initialization: zero-mean Gaussian, variance 2/fan_in.
template <typename T>
Tensor<T> he_normal(Shape shape, int64_t fan_in, SequentialRng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(stddev * rng.normal());
  auto t = Tensor<T>::from_data(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> zero_param(Shape shape) {
  auto t = Tensor<T>::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

// Residual convolution block: two 3x3 convolutions with LeakyReLU after
// each, plus a skip connection (identity when channel counts match, 1x1
// convolution otherwise). Spatial size is preserved.
template <typename T>
struct ConvBlock {
  int64_t in_ch = 0;
  int64_t out_ch = 0;
  T slope = T(0.2);
  Tensor<T> w1, b1, w2, b2;
  Tensor<T> skip_w, skip_b;  // defined only when in_ch != out_ch

  bool has_skip_conv() const { return in_ch != out_ch; }

  static ConvBlock init(int64_t in_ch, int64_t out_ch, T slope,
                        SequentialRng& rng) {
    ConvBlock b;
    b.in_ch = in_ch;
    b.out_ch = out_ch;
    b.slope = slope;
    b.w1 = he_normal<T>({out_ch, in_ch, 3, 3}, in_ch * 9, rng);
    b.b1 = zero_param<T>({out_ch});
    b.w2 = he_normal<T>({out_ch, out_ch, 3, 3}, out_ch * 9, rng);
    b.b2 = zero_param<T>({out_ch});
    if (in_ch != out_ch) {
      b.skip_w = he_normal<T>({out_ch, in_ch, 1, 1}, in_ch, rng);
      b.skip_b = zero_param<T>({out_ch});
    }
    return b;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto h = leaky_relu(conv2d(x, w1, b1, 1, 1), slope);
    h = leaky_relu(conv2d(h, w2, b2, 1, 1), slope);
    auto sc = has_skip_conv() ? conv2d(x, skip_w, skip_b, 1, 0) : x;
    return add(h, sc);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".conv1.w", w1);
    f(prefix + ".conv1.b", b1);
    f(prefix + ".conv2.w", w2);
    f(prefix + ".conv2.b", b2);
    if (has_skip_conv()) {
      f(prefix + ".skip.w", skip_w);
      f(prefix + ".skip.b", skip_b);
    }
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    visit(prefix, [&](const std::string& name, Tensor<T>& t) {
      out.push_back({name, t});
    });
  }
};

}  // namespace nbnet
