#pragma once

#include <string>

#include "nbnet/rng.hpp"
#include "nbnet/tensor.hpp"

// Synthetic noise: AWGN at a fixed sigma, and spatially variant Gaussian
// noise where a per-pixel mask scales unit normals. Draws come from a
// counter-based generator, so results are reproducible and order-independent.

namespace nbnet {

enum class NoiseKind { kAwgn, kNonIid };
enum class MaskId { kTrain, kTest1, kTest2, kTest3, kConstant };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kAwgn;
  double sigma = 25.0 / 255.0;  // [0,1] image units
  MaskId mask_id = MaskId::kTrain;
  double constant_value = 25.0 / 255.0;  // for the constant debug mask
  uint64_t seed = 0;

  /// "awgn:<sigma/255>" or "noniid:<train|test1|test2|test3|const[:v]>";
  /// numeric values are given in 8-bit units and divided by 255.
  static NoiseSpec parse(const std::string& text, uint64_t seed);
  std::string describe() const;
};

std::string mask_id_name(MaskId id);

/// Per-pixel standard deviation field, H x W, values in [5/255, 50/255]
/// (except the constant debug mask). Deterministic in (mask id, H, W, seed).
template <typename T>
Tensor<T> make_mask(MaskId id, int64_t height, int64_t width, uint64_t seed,
                    double constant_value = 25.0 / 255.0) {
  check(height >= 8 && width >= 8, "make_mask: mask must be at least 8x8");
  const double floor_sd = 5.0 / 255.0, peak_sd = 50.0 / 255.0;
  auto m = Tensor<T>::zeros({height, width});
  auto d = m.mutable_data();
  CounterRng rng(seed, 0x6d61736bULL);  // fixed stream for mask parameters

  auto bump = [&](double ci, double cj, bool inverted) {
    const double s = static_cast<double>(std::min(height, width)) / 4.0;
    for (int64_t i = 0; i < height; ++i)
      for (int64_t j = 0; j < width; ++j) {
        const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
        double g = std::exp(-d2 / (2.0 * s * s));
        if (inverted) g = 1.0 - g;
        d[i * width + j] = static_cast<T>(floor_sd + (peak_sd - floor_sd) * g);
      }
  };

  switch (id) {
    case MaskId::kTrain: {
      // peak placed randomly; this is the training field
      const double ci = rng.uniform(0) * static_cast<double>(height - 1);
      const double cj = rng.uniform(1) * static_cast<double>(width - 1);
      bump(ci, cj, false);
      break;
    }
    case MaskId::kTest1:
      bump(static_cast<double>(height) / 2.0, static_cast<double>(width) / 2.0,
           true);
      break;
    case MaskId::kTest2:
      for (int64_t i = 0; i < height; ++i)
        for (int64_t j = 0; j < width; ++j)
          d[i * width + j] = static_cast<T>(
              floor_sd + (peak_sd - floor_sd) *
                             (static_cast<double>(j) /
                              static_cast<double>(width - 1)));
      break;
    case MaskId::kTest3: {
      const double period =
          std::max(8.0, static_cast<double>(std::min(height, width)) / 2.0);
      for (int64_t i = 0; i < height; ++i)
        for (int64_t j = 0; j < width; ++j) {
          const double ph =
              std::sin(2.0 * 3.14159265358979323846 *
                       (static_cast<double>(i + j) / period));
          d[i * width + j] =
              static_cast<T>(floor_sd + (peak_sd - floor_sd) * 0.5 * (ph + 1.0));
        }
      break;
    }
    case MaskId::kConstant:
      for (auto& v : d) v = static_cast<T>(constant_value);
      break;
  }
  return m;
}

/// y = x + sd .* g with g ~ N(0,1) drawn independently per element; the
/// standard-deviation field broadcasts over batch and channels. The output
/// is intentionally not clamped. `stream` selects an independent draw
/// (training uses one stream per iteration).
template <typename T>
Tensor<T> apply_noise_field(const Tensor<T>& clean, const Tensor<T>& sd_field,
                            uint64_t seed, uint64_t stream = 0) {
  check(clean.ndim() == 4, "apply_noise: input must be BxCxHxW");
  const int64_t H = clean.dim(2), W = clean.dim(3);
  check(sd_field.ndim() == 2 && sd_field.dim(0) == H && sd_field.dim(1) == W,
        "apply_noise: mask shape mismatch");
  CounterRng rng(seed, stream);
  auto out = Tensor<T>::zeros(clean.shape());
  auto o = out.mutable_data();
  auto x = clean.data();
  auto sd = sd_field.data();
  const int64_t hw = H * W;
  for (int64_t e = 0; e < clean.numel(); ++e) {
    const T g = static_cast<T>(rng.normal(static_cast<uint64_t>(e)));
    o[e] = x[e] + g * sd[e % hw];
  }
  return out;
}

template <typename T>
Tensor<T> apply_noise(const Tensor<T>& clean, const NoiseSpec& spec,
                      uint64_t stream = 0) {
  const int64_t H = clean.dim(2), W = clean.dim(3);
  Tensor<T> sd;
  if (spec.kind == NoiseKind::kAwgn) {
    check(spec.sigma >= 0, "apply_noise: sigma must be non-negative");
    sd = Tensor<T>::filled({H, W}, static_cast<T>(spec.sigma));
  } else {
    sd = make_mask<T>(spec.mask_id, H, W, spec.seed, spec.constant_value);
  }
  return apply_noise_field(clean, sd, spec.seed, stream);
}

}  // namespace nbnet
