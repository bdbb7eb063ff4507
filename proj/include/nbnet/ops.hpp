#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "nbnet/tensor.hpp"

// Differentiable operation set: exactly the closure NBNet needs.
// Every op validates shapes, computes the forward value, and registers a
// vector-Jacobian rule via record_op.

namespace nbnet {

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;

template <typename T>
std::vector<T> permute_copy(std::span<const T> src, const Shape& shape,
                            const std::vector<int>& perm) {
  const int nd = static_cast<int>(shape.size());
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = shape[perm[i]];
  std::vector<int64_t> in_stride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * shape[i + 1];
  std::vector<int64_t> step(nd);  // input stride per output axis
  for (int i = 0; i < nd; ++i) step[i] = in_stride[perm[i]];
  std::vector<T> dst(src.size());
  std::vector<int64_t> idx(nd, 0);
  int64_t src_off = 0;
  for (int64_t o = 0; o < static_cast<int64_t>(dst.size()); ++o) {
    dst[o] = src[src_off];
    for (int axis = nd - 1; axis >= 0; --axis) {
      src_off += step[axis];
      if (++idx[axis] < out_shape[axis]) break;
      src_off -= step[axis] * out_shape[axis];
      idx[axis] = 0;
    }
  }
  return dst;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and shape ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  auto pa = a.data(), pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) o[i] = pa[i] + pb[i];
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  record_op<T>(out, {a, b}, [ga, gb](auto& node) {
    if (ga) node.parents[0]->accumulate(node.grad);
    if (gb) node.parents[1]->accumulate(node.grad);
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  auto pa = a.data(), pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) o[i] = pa[i] * pb[i];
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  record_op<T>(out, {a, b}, [ga, gb](auto& node) {
    auto& g = node.grad;
    if (ga) {
      auto buf = node.parents[0]->grad_buffer();
      auto vb = *node.parents[1]->values;
      for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * vb[i];
    }
    if (gb) {
      auto buf = node.parents[1]->grad_buffer();
      auto va = *node.parents[0]->values;
      for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i] * va[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  auto pa = a.data();
  for (int64_t i = 0; i < a.numel(); ++i) o[i] = pa[i] * c;
  const bool ga = a.requires_grad();
  record_op<T>(out, {a}, [ga, c](auto& node) {
    if (!ga) return;
    auto buf = node.parents[0]->grad_buffer();
    for (size_t i = 0; i < node.grad.size(); ++i) buf[i] += node.grad[i] * c;
  });
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
  check(negative_slope > T(0) && negative_slope < T(1),
        "leaky_relu: negative_slope must be in (0,1)");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  auto px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i)
    o[i] = px[i] > T(0) ? px[i] : negative_slope * px[i];
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx, negative_slope](auto& node) {
    if (!gx) return;
    auto buf = node.parents[0]->grad_buffer();
    auto vx = *node.parents[0]->values;
    for (size_t i = 0; i < node.grad.size(); ++i)
      buf[i] += node.grad[i] * (vx[i] > T(0) ? T(1) : negative_slope);
  });
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const int nd = static_cast<int>(s0.size());
  check(axis >= 0 && axis < nd, "concat: axis out of range");
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    check(p.ndim() == nd, "concat: rank mismatch");
    for (int i = 0; i < nd; ++i)
      check(i == axis || p.shape()[i] == s0[i],
            "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                shape_str(s0) + " on non-concat axis");
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (int i = axis + 1; i < nd; ++i) inner *= s0[i];

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto o = out.mutable_data();
  const int64_t out_row = axis_total * inner;
  int64_t col_off = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(col_off);
    const int64_t rows = p.shape()[axis] * inner;
    auto pd = p.data();
    for (int64_t ou = 0; ou < outer; ++ou)
      std::copy_n(pd.data() + ou * rows, rows, o.data() + ou * out_row + col_off);
    col_off += rows;
  }
  bool any = false;
  std::vector<bool> gp;
  for (const auto& p : parts) {
    gp.push_back(p.requires_grad());
    any = any || p.requires_grad();
  }
  record_op<T>(out, parts, [outer, out_row, offsets, gp](auto& node) {
    for (size_t k = 0; k < node.parents.size(); ++k) {
      if (!gp[k]) continue;
      auto buf = node.parents[k]->grad_buffer();
      const int64_t rows =
          static_cast<int64_t>(node.parents[k]->values->size()) / outer;
      for (int64_t ou = 0; ou < outer; ++ou) {
        const T* g = node.grad.data() + ou * out_row + offsets[k];
        T* dst = buf.data() + ou * rows;
        for (int64_t i = 0; i < rows; ++i) dst[i] += g[i];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  check(numel(new_shape) == x.numel(),
        "reshape: cannot view " + shape_str(x.shape()) + " as " +
            shape_str(new_shape));
  // Shares the value buffer; only the shape changes.
  Tensor<T> out = Tensor<T>::view_of(std::move(new_shape), x.impl()->values);
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx](auto& node) {
    if (gx) node.parents[0]->accumulate(node.grad);
  });
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::vector<int> perm) {
  const int nd = x.ndim();
  check(static_cast<int>(perm.size()) == nd, "permute: rank mismatch");
  std::vector<bool> seen(nd, false);
  for (int p : perm) {
    check(p >= 0 && p < nd && !seen[p], "permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = x.shape()[perm[i]];
  Tensor<T> out =
      Tensor<T>::from_data(out_shape, detail::permute_copy(x.data(), x.shape(), perm));
  std::vector<int> inv(nd);
  for (int i = 0; i < nd; ++i) inv[perm[i]] = i;
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx, inv, out_shape](auto& node) {
    if (!gx) return;
    auto g = detail::permute_copy(std::span<const T>(node.grad), out_shape, inv);
    node.parents[0]->accumulate(g);
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const int64_t n = x.numel();
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx, n](auto& node) {
    if (!gx) return;
    auto buf = node.parents[0]->grad_buffer();
    const T g = node.grad[0] / static_cast<T>(n);
    for (auto& v : buf) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx](auto& node) {
    if (!gx) return;
    auto buf = node.parents[0]->grad_buffer();
    const T g = node.grad[0];
    for (auto& v : buf) v += g;
  });
  return out;
}

/// Crop a B x C x H x W tensor to rows [top, top+h) and cols [left, left+w).
template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int64_t top, int64_t left, int64_t h,
                 int64_t w) {
  check(x.ndim() == 4, "crop2d: expected BxCxHxW, got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(top >= 0 && left >= 0 && h > 0 && w > 0 && top + h <= H && left + w <= W,
        "crop2d: window out of bounds");
  Tensor<T> out = Tensor<T>::zeros({B, C, h, w});
  auto o = out.mutable_data();
  auto px = x.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t i = 0; i < h; ++i)
      std::copy_n(px.data() + (bc * H + top + i) * W + left, w,
                  o.data() + (bc * h + i) * w);
  const bool gx = x.requires_grad();
  record_op<T>(out, {x}, [gx, B, C, H, W, top, left, h, w](auto& node) {
    if (!gx) return;
    auto buf = node.parents[0]->grad_buffer();
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t i = 0; i < h; ++i) {
        const T* g = node.grad.data() + (bc * h + i) * w;
        T* dst = buf.data() + (bc * H + top + i) * W + left;
        for (int64_t j = 0; j < w; ++j) dst[j] += g[j];
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// convolutions

namespace detail {

// im2col for cross-correlation with zero padding; columns indexed by output
// pixel, rows by (ci, u, v).
template <typename T>
void im2col(const T* in, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, T* cols) {
  for (int64_t ci = 0; ci < C; ++ci)
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        T* row = cols + ((ci * kh + u) * kw + v) * (Ho * Wo);
        const T* src = in + ci * H * W;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t y = oi * stride - pad + u;
          if (y < 0 || y >= H) {
            std::fill_n(row + oi * Wo, Wo, T(0));
            continue;
          }
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t x = oj * stride - pad + v;
            row[oi * Wo + oj] = (x >= 0 && x < W) ? src[y * W + x] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, int64_t C, int64_t H, int64_t W, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t Ho, int64_t Wo,
                T* out) {
  for (int64_t ci = 0; ci < C; ++ci)
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        const T* row = cols + ((ci * kh + u) * kw + v) * (Ho * Wo);
        T* dst = out + ci * H * W;
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t y = oi * stride - pad + u;
          if (y < 0 || y >= H) continue;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t x = oj * stride - pad + v;
            if (x >= 0 && x < W) dst[y * W + x] += row[oi * Wo + oj];
          }
        }
      }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int64_t stride, int64_t padding) {
  check(input.ndim() == 4, "conv2d: input must be BxCxHxW");
  check(weight.ndim() == 4, "conv2d: weight must be CoutxCinxKhxKw");
  const int64_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const int64_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  check(weight.dim(1) == Cin, "conv2d: input channels " + std::to_string(Cin) +
                                  " do not match weight " +
                                  std::to_string(weight.dim(1)));
  check(bias.numel() == Cout, "conv2d: bias size mismatch");
  check(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  check(H + 2 * padding >= kh && W + 2 * padding >= kw,
        "conv2d: kernel larger than padded input");
  const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  const int64_t patch = Cin * kh * kw;

  Tensor<T> out = Tensor<T>::zeros({B, Cout, Ho, Wo});
  {
    std::vector<T> cols(patch * Ho * Wo);
    detail::MapC<T> Wm(weight.data().data(), Cout, patch);
    auto o = out.mutable_data();
    for (int64_t b = 0; b < B; ++b) {
      detail::im2col(input.data().data() + b * Cin * H * W, Cin, H, W, kh, kw,
                     stride, padding, Ho, Wo, cols.data());
      detail::MapC<T> Cm(cols.data(), patch, Ho * Wo);
      detail::MapM<T> Om(o.data() + b * Cout * Ho * Wo, Cout, Ho * Wo);
      Om.noalias() = Wm * Cm;
      for (int64_t co = 0; co < Cout; ++co)
        Om.row(co).array() += bias.data()[co];
    }
  }

  const bool gi = input.requires_grad(), gw = weight.requires_grad(),
             gb = bias.requires_grad();
  record_op<T>(out, {input, weight, bias},
               [=](auto& node) {
    const auto& in_vals = *node.parents[0]->values;
    const auto& w_vals = *node.parents[1]->values;
    std::vector<T> cols(patch * Ho * Wo);
    std::vector<T> dcols(gi ? patch * Ho * Wo : 0);
    detail::MapC<T> Wm(w_vals.data(), Cout, patch);
    for (int64_t b = 0; b < B; ++b) {
      detail::MapC<T> Gm(node.grad.data() + b * Cout * Ho * Wo, Cout, Ho * Wo);
      if (gw || gi) {
        if (gw) {
          detail::im2col(in_vals.data() + b * Cin * H * W, Cin, H, W, kh, kw,
                         stride, padding, Ho, Wo, cols.data());
          detail::MapC<T> Cm(cols.data(), patch, Ho * Wo);
          detail::MapM<T> dWm(node.parents[1]->grad_buffer().data(), Cout, patch);
          dWm.noalias() += Gm * Cm.transpose();
        }
        if (gi) {
          detail::MapM<T> dCm(dcols.data(), patch, Ho * Wo);
          dCm.noalias() = Wm.transpose() * Gm;
          detail::col2im_add(dcols.data(), Cin, H, W, kh, kw, stride, padding,
                             Ho, Wo,
                             node.parents[0]->grad_buffer().data() + b * Cin * H * W);
        }
      }
      if (gb) {
        auto dB = node.parents[2]->grad_buffer();
        for (int64_t co = 0; co < Cout; ++co) dB[co] += Gm.row(co).sum();
      }
    }
  });
  return out;
}

/// Fractionally strided convolution restricted to kernel == stride (the 2x2
/// stride-2 configuration the network uses); output is H*stride x W*stride.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int64_t stride) {
  check(input.ndim() == 4, "conv_transpose2d: input must be BxCxHxW");
  check(weight.ndim() == 4, "conv_transpose2d: weight must be CinxCoutxKhxKw");
  const int64_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2),
                W = input.dim(3);
  const int64_t Cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  check(weight.dim(0) == Cin, "conv_transpose2d: channel mismatch");
  check(bias.numel() == Cout, "conv_transpose2d: bias size mismatch");
  if (kh != stride || kw != stride)
    throw ConfigError("conv_transpose2d: only kernel == stride supported, got "
                      "kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                      " stride " + std::to_string(stride));
  const int64_t Ho = H * stride, Wo = W * stride;

  // Per-tap weight slices as dense Cin x Cout matrices.
  const auto slice_w = [Cin, Cout, kh, kw](const T* w, int64_t u, int64_t v) {
    detail::MatRM<T> Wuv(Cin, Cout);
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t co = 0; co < Cout; ++co)
        Wuv(ci, co) = w[((ci * Cout + co) * kh + u) * kw + v];
    return Wuv;
  };

  Tensor<T> out = Tensor<T>::zeros({B, Cout, Ho, Wo});
  {
    auto o = out.mutable_data();
    detail::MatRM<T> slice(Cout, H * W);
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        detail::MatRM<T> Wuv = slice_w(weight.data().data(), u, v);
        for (int64_t b = 0; b < B; ++b) {
          detail::MapC<T> Im(input.data().data() + b * Cin * H * W, Cin, H * W);
          slice.noalias() = Wuv.transpose() * Im;
          for (int64_t co = 0; co < Cout; ++co) {
            const T bco = bias.data()[co];
            T* dst = o.data() + ((b * Cout + co) * Ho) * Wo;
            for (int64_t i = 0; i < H; ++i)
              for (int64_t j = 0; j < W; ++j)
                dst[(i * stride + u) * Wo + (j * stride + v)] =
                    slice(co, i * W + j) + bco;
          }
        }
      }
  }

  const bool gi = input.requires_grad(), gw = weight.requires_grad(),
             gb = bias.requires_grad();
  record_op<T>(out, {input, weight, bias}, [=](auto& node) {
    const auto& in_vals = *node.parents[0]->values;
    const auto& w_vals = *node.parents[1]->values;
    detail::MatRM<T> gslice(Cout, H * W);
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        detail::MatRM<T> Wuv = slice_w(w_vals.data(), u, v);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t co = 0; co < Cout; ++co) {
            const T* g = node.grad.data() + ((b * Cout + co) * Ho) * Wo;
            for (int64_t i = 0; i < H; ++i)
              for (int64_t j = 0; j < W; ++j)
                gslice(co, i * W + j) = g[(i * stride + u) * Wo + (j * stride + v)];
          }
          if (gi) {
            detail::MapM<T> dIm(node.parents[0]->grad_buffer().data() + b * Cin * H * W,
                                Cin, H * W);
            dIm.noalias() += Wuv * gslice;
          }
          if (gw) {
            detail::MapC<T> Im(in_vals.data() + b * Cin * H * W, Cin, H * W);
            detail::MatRM<T> dWuv = Im * gslice.transpose();
            T* dw = node.parents[1]->grad_buffer().data();
            for (int64_t ci = 0; ci < Cin; ++ci)
              for (int64_t co = 0; co < Cout; ++co)
                dw[((ci * Cout + co) * kh + u) * kw + v] += dWuv(ci, co);
          }
          if (gb) {
            auto dB = node.parents[2]->grad_buffer();
            for (int64_t co = 0; co < Cout; ++co)
              dB[co] += gslice.row(co).sum();
          }
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// batched linear algebra

/// Batched matrix product: [B,M,K] x [B,K,N] -> [B,M,N].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 3 && b.ndim() == 3, "bmm: expected rank-3 tensors");
  const int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  check(b.dim(0) == B && b.dim(1) == K,
        "bmm: shape mismatch " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({B, M, N});
  {
    auto o = out.mutable_data();
    for (int64_t i = 0; i < B; ++i) {
      detail::MapC<T> Am(a.data().data() + i * M * K, M, K);
      detail::MapC<T> Bm(b.data().data() + i * K * N, K, N);
      detail::MapM<T> Om(o.data() + i * M * N, M, N);
      Om.noalias() = Am * Bm;
    }
  }
  const bool ga = a.requires_grad(), gb = b.requires_grad();
  record_op<T>(out, {a, b}, [=](auto& node) {
    const auto& av = *node.parents[0]->values;
    const auto& bv = *node.parents[1]->values;
    for (int64_t i = 0; i < B; ++i) {
      detail::MapC<T> Gm(node.grad.data() + i * M * N, M, N);
      if (ga) {
        detail::MapC<T> Bm(bv.data() + i * K * N, K, N);
        detail::MapM<T> dA(node.parents[0]->grad_buffer().data() + i * M * K, M, K);
        dA.noalias() += Gm * Bm.transpose();
      }
      if (gb) {
        detail::MapC<T> Am(av.data() + i * M * K, M, K);
        detail::MapM<T> dB(node.parents[1]->grad_buffer().data() + i * K * N, K, N);
        dB.noalias() += Am.transpose() * Gm;
      }
    }
  });
  return out;
}

namespace detail {

// Dense lower Cholesky of a K x K SPD matrix, row-major. Throws
// NumericalError naming the batch on a non-positive pivot.
template <typename T>
void cholesky(const T* G, int64_t K, T* L, int64_t batch_index) {
  for (int64_t i = 0; i < K * K; ++i)
    if (!std::isfinite(static_cast<double>(G[i])))
      throw NumericalError("gram matrix has non-finite entries (batch " +
                           std::to_string(batch_index) + ")");
  std::fill_n(L, K * K, T(0));
  for (int64_t j = 0; j < K; ++j) {
    T d = G[j * K + j];
    for (int64_t k = 0; k < j; ++k) d -= L[j * K + k] * L[j * K + k];
    if (!(d > T(0)) || !std::isfinite(static_cast<double>(d)))
      throw NumericalError(
          "gram matrix not positive definite; basis is degenerate (batch " +
          std::to_string(batch_index) + ")");
    L[j * K + j] = std::sqrt(d);
    for (int64_t i = j + 1; i < K; ++i) {
      T s = G[i * K + j];
      for (int64_t k = 0; k < j; ++k) s -= L[i * K + k] * L[j * K + k];
      L[i * K + j] = s / L[j * K + j];
    }
  }
}

// Solves (L L^T) Z = RHS in place for a K x C right-hand side.
template <typename T>
void cholesky_solve(const T* L, int64_t K, T* rhs, int64_t C) {
  for (int64_t i = 0; i < K; ++i) {  // forward: L y = rhs
    for (int64_t k = 0; k < i; ++k)
      for (int64_t c = 0; c < C; ++c)
        rhs[i * C + c] -= L[i * K + k] * rhs[k * C + c];
    for (int64_t c = 0; c < C; ++c) rhs[i * C + c] /= L[i * K + i];
  }
  for (int64_t i = K - 1; i >= 0; --i) {  // backward: L^T z = y
    for (int64_t k = i + 1; k < K; ++k)
      for (int64_t c = 0; c < C; ++c)
        rhs[i * C + c] -= L[k * K + i] * rhs[k * C + c];
    for (int64_t c = 0; c < C; ++c) rhs[i * C + c] /= L[i * K + i];
  }
}

}  // namespace detail

/// Regularized orthogonal projection of X onto span(V), per batch element:
/// V * solve(V^T V + eps*I, V^T X). The N x N projection matrix is never
/// materialized. Differentiable in both V and X via the solve adjoints.
template <typename T>
Tensor<T> batched_gram_solve(const Tensor<T>& V, const Tensor<T>& X, T eps) {
  check(V.ndim() == 3 && X.ndim() == 3,
        "batched_gram_solve: expected [B,N,K] and [B,N,C]");
  const int64_t B = V.dim(0), N = V.dim(1), K = V.dim(2), C = X.dim(2);
  check(X.dim(0) == B && X.dim(1) == N,
        "batched_gram_solve: V " + shape_str(V.shape()) + " vs X " +
            shape_str(X.shape()));
  check(K <= N, "batched_gram_solve: K must not exceed N");
  check(eps >= T(0), "batched_gram_solve: eps must be non-negative");

  Tensor<T> out = Tensor<T>::zeros({B, N, C});
  // Factor and solution are kept for the backward pass (tiny: K*K and K*C).
  auto Ls = std::make_shared<std::vector<T>>(B * K * K);
  auto Zs = std::make_shared<std::vector<T>>(B * K * C);
  {
    auto o = out.mutable_data();
    detail::MatRM<T> G(K, K);
    for (int64_t b = 0; b < B; ++b) {
      detail::MapC<T> Vm(V.data().data() + b * N * K, N, K);
      detail::MapC<T> Xm(X.data().data() + b * N * C, N, C);
      G.noalias() = Vm.transpose() * Vm;
      for (int64_t k = 0; k < K; ++k) G(k, k) += eps;
      detail::cholesky(G.data(), K, Ls->data() + b * K * K, b);
      detail::MapM<T> Zm(Zs->data() + b * K * C, K, C);
      Zm.noalias() = Vm.transpose() * Xm;
      detail::cholesky_solve(Ls->data() + b * K * K, K, Zm.data(), C);
      detail::MapM<T> Om(o.data() + b * N * C, N, C);
      Om.noalias() = Vm * Zm;
    }
  }

  const bool gv = V.requires_grad(), gx = X.requires_grad();
  record_op<T>(out, {V, X}, [=](auto& node) {
    const auto& vv = *node.parents[0]->values;
    const auto& xv = *node.parents[1]->values;
    detail::MatRM<T> Zbar(K, C), Wbar(K, C), Gbar(K, K);
    for (int64_t b = 0; b < B; ++b) {
      detail::MapC<T> Vm(vv.data() + b * N * K, N, K);
      detail::MapC<T> Xm(xv.data() + b * N * C, N, C);
      detail::MapC<T> Ybar(node.grad.data() + b * N * C, N, C);
      detail::MapC<T> Zm(Zs->data() + b * K * C, K, C);
      const T* L = Ls->data() + b * K * K;
      // Y = V Z  with  Z = G^{-1} V^T X,  G = V^T V + eps I.
      Zbar.noalias() = Vm.transpose() * Ybar;
      Wbar = Zbar;
      detail::cholesky_solve(L, K, Wbar.data(), C);
      if (gv) {
        detail::MapM<T> dV(node.parents[0]->grad_buffer().data() + b * N * K, N, K);
        dV.noalias() += Ybar * Zm.transpose();
        dV.noalias() += Xm * Wbar.transpose();
        Gbar.noalias() = Wbar * Zm.transpose();
        dV.noalias() -= Vm * (Gbar + Gbar.transpose());
      }
      if (gx) {
        detail::MapM<T> dX(node.parents[1]->grad_buffer().data() + b * N * C, N, C);
        dX.noalias() += Vm * Wbar;
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// loss

/// Mean absolute difference; subgradient 0 at exact ties.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  check(pred.shape() == target.shape(),
        "l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
            shape_str(target.shape()));
  const int64_t n = pred.numel();
  T acc = 0;
  auto pp = pred.data(), pt = target.data();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(pp[i] - pt[i]);
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  const bool gp = pred.requires_grad(), gt = target.requires_grad();
  record_op<T>(out, {pred, target}, [gp, gt, n](auto& node) {
    const auto& pv = *node.parents[0]->values;
    const auto& tv = *node.parents[1]->values;
    const T g = node.grad[0] / static_cast<T>(n);
    auto sgn = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (gp) {
      auto buf = node.parents[0]->grad_buffer();
      for (int64_t i = 0; i < n; ++i) buf[i] += g * sgn(pv[i] - tv[i]);
    }
    if (gt) {
      auto buf = node.parents[1]->grad_buffer();
      for (int64_t i = 0; i < n; ++i) buf[i] -= g * sgn(pv[i] - tv[i]);
    }
  });
  return out;
}

}  // namespace nbnet
