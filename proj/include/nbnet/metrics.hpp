#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nbnet/tensor.hpp"

// PSNR and SSIM. Accumulation is double precision regardless of the tensor
// type; identical images report an infinite PSNR sentinel.

namespace nbnet {

struct MetricReport {
  struct PerImage {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double noisy_psnr_db = 0.0;  // input-vs-clean baseline, when applicable
  };
  std::vector<PerImage> per_image;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_noisy_psnr_db = 0.0;

  void finalize() {
    mean_psnr_db = mean_ssim = mean_noisy_psnr_db = 0.0;
    if (per_image.empty()) return;
    for (const auto& p : per_image) {
      mean_psnr_db += p.psnr_db;
      mean_ssim += p.ssim;
      mean_noisy_psnr_db += p.noisy_psnr_db;
    }
    const double n = static_cast<double>(per_image.size());
    mean_psnr_db /= n;
    mean_ssim /= n;
    mean_noisy_psnr_db /= n;
  }
};

template <typename T>
double psnr(const Tensor<T>& ref, const Tensor<T>& test, double peak = 1.0) {
  check(ref.shape() == test.shape(), "psnr: shape mismatch");
  check(peak > 0, "psnr: peak must be positive");
  double mse = 0.0;
  for (int64_t i = 0; i < ref.numel(); ++i) {
    const double d = static_cast<double>(ref.data()[i]) -
                     static_cast<double>(test.data()[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(ref.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

/// BT.601 luma from a [1,C,H,W] or [C,H,W] tensor; returns H*W doubles.
template <typename T>
std::vector<double> luma_plane(const Tensor<T>& t, int64_t& h, int64_t& w) {
  Shape s = t.shape();
  if (s.size() == 4) {
    check(s[0] == 1, "ssim: batch must be 1");
    s.erase(s.begin());
  }
  check(s.size() == 3 && (s[0] == 1 || s[0] == 3),
        "ssim: expected a 1- or 3-channel image");
  h = s[1];
  w = s[2];
  const int64_t hw = h * w;
  std::vector<double> y(static_cast<size_t>(hw));
  auto d = t.data();
  const T* base = d.data();
  if (s[0] == 1) {
    for (int64_t i = 0; i < hw; ++i) y[i] = static_cast<double>(base[i]);
  } else {
    for (int64_t i = 0; i < hw; ++i)
      y[i] = 0.299 * static_cast<double>(base[i]) +
             0.587 * static_cast<double>(base[hw + i]) +
             0.114 * static_cast<double>(base[2 * hw + i]);
  }
  return y;
}

inline std::vector<double> gaussian_window(int radius, double sigma) {
  const int size = 2 * radius + 1;
  std::vector<double> w(static_cast<size_t>(size) * size);
  double total = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double di = i - radius, dj = j - radius;
      const double g = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(i * size + j)] = g;
      total += g;
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace detail

/// Mean local structural similarity on luma with an 11x11 Gaussian window
/// (sigma 1.5), C1 = (0.01*peak)^2, C2 = (0.03*peak)^2, valid positions only.
template <typename T>
double ssim(const Tensor<T>& ref, const Tensor<T>& test, double peak = 1.0) {
  check(ref.shape() == test.shape(), "ssim: shape mismatch");
  int64_t h = 0, w = 0;
  auto x = detail::luma_plane(ref, h, w);
  auto y = detail::luma_plane(test, h, w);
  constexpr int kRadius = 5;
  constexpr int kSize = 2 * kRadius + 1;
  if (h < kSize || w < kSize)
    throw ConfigError("ssim: image smaller than the 11x11 window");
  static const std::vector<double> win = detail::gaussian_window(kRadius, 1.5);

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double acc = 0.0;
  int64_t count = 0;
  for (int64_t i = kRadius; i < h - kRadius; ++i)
    for (int64_t j = kRadius; j < w - kRadius; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int u = -kRadius; u <= kRadius; ++u)
        for (int v = -kRadius; v <= kRadius; ++v) {
          const double wt =
              win[static_cast<size_t>((u + kRadius) * kSize + (v + kRadius))];
          const double xv = x[static_cast<size_t>((i + u) * w + (j + v))];
          const double yv = y[static_cast<size_t>((i + u) * w + (j + v))];
          mx += wt * xv;
          my += wt * yv;
          sxx += wt * xv * xv;
          syy += wt * yv * yv;
          sxy += wt * xv * yv;
        }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cov = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

}  // namespace nbnet
