#pragma once

#include <string>

#include "nbnet/conv_block.hpp"
#include "nbnet/ops.hpp"

// Subspace attention: a learned block generates K basis maps from a pair of
// feature maps, and one of the pair is reconstructed inside the spanned
// subspace by a regularized orthogonal projection.

namespace nbnet {

enum class SsaVariant { kProjection, kDotProduct };
enum class BasisSource { kX1Only, kX2Only, kX1AndX2 };
enum class ProjectedInput { kX1, kX2 };

struct SsaConfig {
  int64_t k = 16;
  SsaVariant variant = SsaVariant::kProjection;
  BasisSource basis_source = BasisSource::kX1AndX2;
  ProjectedInput projected_input = ProjectedInput::kX1;
  bool head_activation = false;  // extra LeakyReLU on the K basis maps
};

/// Flattens B x C x H x W to B x (H*W) x C, rows in row-major spatial order
/// (the row index varies slowest). The checkpoint format depends on this
/// ordering being fixed.
template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x) {
  check(x.ndim() == 4, "flatten_spatial: expected BxCxHxW");
  const int64_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
  return permute(reshape(x, {B, C, N}), {0, 2, 1});
}

template <typename T>
Tensor<T> unflatten_spatial(const Tensor<T>& x, int64_t h, int64_t w) {
  check(x.ndim() == 3 && x.dim(1) == h * w,
        "unflatten_spatial: shape mismatch");
  const int64_t B = x.dim(0), C = x.dim(2);
  return reshape(permute(x, {0, 2, 1}), {B, C, h, w});
}

/// Projects X (B x C x H x W) onto span(V) per channel; V is B x (H*W) x K.
template <typename T>
Tensor<T> project(const Tensor<T>& V, const Tensor<T>& X, T eps) {
  check(V.ndim() == 3, "project: basis must be Bx(H*W)xK");
  check(X.ndim() == 4, "project: input must be BxCxHxW");
  const int64_t h = X.dim(2), w = X.dim(3);
  check(V.dim(1) == h * w, "project: basis rows " + std::to_string(V.dim(1)) +
                               " do not match H*W = " + std::to_string(h * w));
  auto flat = flatten_spatial(X);
  auto proj = batched_gram_solve(V, flat, eps);
  return unflatten_spatial(proj, h, w);
}

/// The Table-ablation variant: V (V^T X) without the Gram normalization.
/// Unlike the projection this is not invariant to rescaling of V.
template <typename T>
Tensor<T> dot_product_attention(const Tensor<T>& V, const Tensor<T>& X) {
  const int64_t h = X.dim(2), w = X.dim(3);
  check(V.dim(1) == h * w, "dot_product_attention: basis/feature mismatch");
  auto flat = flatten_spatial(X);              // B x N x C
  auto vt = permute(V, {0, 2, 1});             // B x K x N
  auto coeff = bmm(vt, flat);                  // B x K x C
  return unflatten_spatial(bmm(V, coeff), h, w);
}

template <typename T>
struct SsaModule {
  SsaConfig config;
  T eps = T(1e-4);
  T slope = T(0.2);
  ConvBlock<T> basis_block;  // final convolution emits the K basis channels

  static SsaModule init(int64_t channels, const SsaConfig& config, T eps,
                        T slope, SequentialRng& rng) {
    check(config.k >= 1, "ssa: K must be at least 1");
    SsaModule m;
    m.config = config;
    m.eps = eps;
    m.slope = slope;
    const int64_t in_ch =
        config.basis_source == BasisSource::kX1AndX2 ? 2 * channels : channels;
    m.basis_block = ConvBlock<T>::init(in_ch, config.k, slope, rng);
    return m;
  }

  /// Basis maps V as B x (H*W) x K (Fig-style: K maps over the image grid).
  Tensor<T> generate_basis(const Tensor<T>& x1, const Tensor<T>& x2) const {
    check(x1.shape() == x2.shape(), "ssa: X1 and X2 must have equal shapes");
    Tensor<T> src;
    switch (config.basis_source) {
      case BasisSource::kX1Only:
        src = x1;
        break;
      case BasisSource::kX2Only:
        src = x2;
        break;
      case BasisSource::kX1AndX2:
        src = concat<T>({x1, x2}, 1);
        break;
    }
    auto maps = basis_block.forward(src);  // B x K x H x W
    if (config.head_activation) maps = leaky_relu(maps, slope);
    const int64_t B = maps.dim(0), K = maps.dim(1),
                  N = maps.dim(2) * maps.dim(3);
    return permute(reshape(maps, {B, K, N}), {0, 2, 1});
  }

  Tensor<T> forward(const Tensor<T>& x1, const Tensor<T>& x2) const {
    auto V = generate_basis(x1, x2);
    const Tensor<T>& target =
        config.projected_input == ProjectedInput::kX1 ? x1 : x2;
    if (config.variant == SsaVariant::kProjection)
      return project(V, target, eps);
    return dot_product_attention(V, target);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    basis_block.visit(prefix + ".basis", f);
  }

  void collect(const std::string& prefix, ParamList<T>& out) {
    basis_block.collect(prefix + ".basis", out);
  }
};

}  // namespace nbnet
