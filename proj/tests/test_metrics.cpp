#include <cmath>

#include "doctest.h"
#include "nbnet/metrics.hpp"
#include "nbnet/noise.hpp"
#include "nbnet/pipeline.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace nbnet;
using testutil::random_tensor;

TEST_CASE("psnr of identical images is the inf sentinel") {
  auto a = random_tensor<float>({1, 3, 8, 8}, 1, 0.0, 1.0);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 1e9);  // compares greater than any finite value
}

TEST_CASE("psnr of a constant 16/255 offset") {
  auto a = Tensor<double>::filled({1, 3, 8, 8}, 100.0 / 255.0);
  auto b = Tensor<double>::filled({1, 3, 8, 8}, 116.0 / 255.0);
  const double expect = 20.0 * std::log10(255.0 / 16.0);
  CHECK(psnr(a, b) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("psnr matches the brute-force oracle within 1e-9 dB") {
  for (uint64_t s = 0; s < 5; ++s) {
    auto a = random_tensor<double>({1, 3, 17, 13}, 2 * s, 0.0, 1.0);
    auto b = random_tensor<double>({1, 3, 17, 13}, 2 * s + 1, 0.0, 1.0);
    CHECK(std::abs(psnr(a, b) - oracle::psnr(a, b, 1.0)) < 1e-9);
  }
}

TEST_CASE("ssim of an image with itself is exactly one") {
  auto a = random_tensor<double>({1, 3, 16, 16}, 7, 0.0, 1.0);
  CHECK(ssim(a, a) == 1.0);
}

TEST_CASE("ssim of constant images follows the luminance-only formula") {
  auto a = Tensor<double>::filled({1, 1, 16, 16}, 0.5);
  auto b = Tensor<double>::filled({1, 1, 16, 16}, 0.25);
  // scalar oracle: variance terms vanish, c2/c2 cancels
  const double c1 = 1e-4;
  const double expect = (2 * 0.5 * 0.25 + c1) / (0.5 * 0.5 + 0.25 * 0.25 + c1);
  CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ssim matches the brute-force windowed oracle within 1e-6") {
  for (uint64_t s = 0; s < 3; ++s) {
    auto a = random_tensor<double>({1, 3, 20, 14}, 100 + s, 0.0, 1.0);
    auto b = random_tensor<double>({1, 3, 20, 14}, 200 + s, 0.0, 1.0);
    const double ref = oracle::ssim_windowed(oracle::luma(a), oracle::luma(b), 20, 14, 1.0);
    CHECK(std::abs(ssim(a, b) - ref) < 1e-6);
  }
}

TEST_CASE("psnr and ssim are symmetric") {
  auto a = random_tensor<double>({1, 3, 16, 16}, 11, 0.0, 1.0);
  auto b = random_tensor<double>({1, 3, 16, 16}, 12, 0.0, 1.0);
  CHECK(std::abs(psnr(a, b) - psnr(b, a)) < 1e-12);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
}

TEST_CASE("psnr strictly decreases as noise grows") {
  auto clean = random_tensor<double>({1, 3, 32, 32}, 13, 0.1, 0.9);
  double prev = std::numeric_limits<double>::infinity();
  for (double s8 : {5.0, 15.0, 25.0, 50.0}) {
    NoiseSpec spec;
    spec.sigma = s8 / 255.0;
    spec.seed = 3;
    const double p = psnr(clean, apply_noise(clean, spec));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("clamping to [0,1] never decreases PSNR against an in-range reference") {
  for (uint64_t s = 0; s < 10; ++s) {
    auto ref = random_tensor<double>({1, 3, 12, 12}, 300 + s, 0.0, 1.0);
    auto test = random_tensor<double>({1, 3, 12, 12}, 400 + s, -0.4, 1.4);
    CHECK(psnr(ref, clamp01(test)) >= psnr(ref, test));
  }
}

TEST_CASE("ssim rejects images smaller than the window") {
  auto a = Tensor<double>::filled({1, 1, 8, 8}, 0.5);
  CHECK_THROWS_AS(ssim(a, a), ConfigError);
}

TEST_CASE("metric report means") {
  MetricReport r;
  r.per_image.push_back({"a", 30.0, 0.9, 20.0});
  r.per_image.push_back({"b", 34.0, 0.7, 22.0});
  r.finalize();
  CHECK(r.mean_psnr_db == doctest::Approx(32.0));
  CHECK(r.mean_ssim == doctest::Approx(0.8));
  CHECK(r.mean_noisy_psnr_db == doctest::Approx(21.0));
}
