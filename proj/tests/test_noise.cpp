#include <cmath>

#include "doctest.h"
#include "nbnet/noise.hpp"
#include "test_helpers.hpp"

using namespace nbnet;

TEST_CASE("masks are deterministic and stay inside [5/255, 50/255]") {
  for (auto id : {MaskId::kTrain, MaskId::kTest1, MaskId::kTest2, MaskId::kTest3}) {
    auto a = make_mask<float>(id, 16, 24, 3);
    auto b = make_mask<float>(id, 16, 24, 3);
    CHECK(testutil::bitwise_equal(a, b));
    for (float v : a.data()) {
      CHECK(v >= 5.0f / 255.0f - 1e-7f);
      CHECK(v <= 50.0f / 255.0f + 1e-7f);
    }
  }
  // the four patterns are pairwise distinct
  auto t0 = make_mask<float>(MaskId::kTrain, 16, 16, 3);
  auto t1 = make_mask<float>(MaskId::kTest1, 16, 16, 3);
  auto t2 = make_mask<float>(MaskId::kTest2, 16, 16, 3);
  auto t3 = make_mask<float>(MaskId::kTest3, 16, 16, 3);
  CHECK_FALSE(testutil::bitwise_equal(t0, t1));
  CHECK_FALSE(testutil::bitwise_equal(t0, t2));
  CHECK_FALSE(testutil::bitwise_equal(t1, t2));
  CHECK_FALSE(testutil::bitwise_equal(t2, t3));
  CHECK_THROWS_AS(make_mask<float>(MaskId::kTrain, 4, 16, 3), ConfigError);
}

TEST_CASE("constant mask reduces the non-iid generator to AWGN bitwise") {
  NoiseSpec awgn;
  awgn.kind = NoiseKind::kAwgn;
  awgn.sigma = 25.0 / 255.0;
  awgn.seed = 99;
  NoiseSpec noniid;
  noniid.kind = NoiseKind::kNonIid;
  noniid.mask_id = MaskId::kConstant;
  noniid.constant_value = 25.0 / 255.0;
  noniid.seed = 99;

  auto clean = testutil::random_tensor<float>({2, 3, 16, 16}, 1, 0.0, 1.0);
  auto a = apply_noise(clean, awgn, 5);
  auto b = apply_noise(clean, noniid, 5);
  CHECK(testutil::bitwise_equal(a, b));
}

TEST_CASE("zero sigma is the identity") {
  NoiseSpec spec;
  spec.sigma = 0.0;
  auto clean = testutil::random_tensor<float>({1, 3, 8, 8}, 2, 0.0, 1.0);
  CHECK(testutil::bitwise_equal(apply_noise(clean, spec), clean));
}

TEST_CASE("awgn sample std matches sigma within 1% over 1e6 draws") {
  NoiseSpec spec;
  spec.sigma = 25.0 / 255.0;
  spec.seed = 7;
  auto clean = Tensor<double>::filled({1, 1, 1000, 1000}, 0.5);
  auto noisy = apply_noise(clean, spec);
  double mean = 0;
  for (double v : noisy.data()) mean += v - 0.5;
  mean /= static_cast<double>(noisy.numel());
  double var = 0;
  for (double v : noisy.data()) var += (v - 0.5 - mean) * (v - 0.5 - mean);
  var /= static_cast<double>(noisy.numel() - 1);
  const double sd = std::sqrt(var);
  CHECK(sd == doctest::Approx(25.0 / 255.0).epsilon(0.01));
  // zero-mean within 3 standard errors
  const double se = (25.0 / 255.0) / std::sqrt(1e6);
  CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("per-pixel std matches the mask within 2% over 1e5 draws") {
  const int64_t H = 12, W = 12, B = 100, reps = 1000;  // 1e5 draws per pixel
  auto mask = make_mask<double>(MaskId::kTrain, H, W, 21);
  auto zeros = Tensor<double>::zeros({B, 1, H, W});
  std::vector<double> sq(static_cast<size_t>(H * W), 0.0);
  for (int64_t r = 0; r < reps; ++r) {
    auto n = apply_noise_field(zeros, mask, /*seed=*/5, /*stream=*/r);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < H * W; ++p) {
        const double v = n.data()[b * H * W + p];
        sq[static_cast<size_t>(p)] += v * v;
      }
  }
  for (int64_t p = 0; p < H * W; ++p) {
    const double sd = std::sqrt(sq[static_cast<size_t>(p)] / (B * reps));
    CHECK(sd == doctest::Approx(mask.data()[p]).epsilon(0.02));
  }
}

TEST_CASE("per-pixel std field correlates with the mask at r > 0.99") {
  const int64_t H = 16, W = 16, B = 100, reps = 100;  // 1e4 draws per pixel
  NoiseSpec spec;
  spec.kind = NoiseKind::kNonIid;
  spec.mask_id = MaskId::kTrain;
  spec.seed = 31;
  auto mask = make_mask<double>(MaskId::kTrain, H, W, 31);
  auto zeros = Tensor<double>::zeros({B, 1, H, W});
  std::vector<double> sq(static_cast<size_t>(H * W), 0.0);
  for (int64_t r = 0; r < reps; ++r) {
    auto n = apply_noise(zeros, spec, /*stream=*/r + 1);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < H * W; ++p) {
        const double v = n.data()[b * H * W + p];
        sq[static_cast<size_t>(p)] += v * v;
      }
  }
  double mx = 0, my = 0;
  std::vector<double> sd(static_cast<size_t>(H * W));
  for (int64_t p = 0; p < H * W; ++p) {
    sd[static_cast<size_t>(p)] = std::sqrt(sq[static_cast<size_t>(p)] / (B * reps));
    mx += mask.data()[p];
    my += sd[static_cast<size_t>(p)];
  }
  mx /= H * W;
  my /= H * W;
  double cxy = 0, cxx = 0, cyy = 0;
  for (int64_t p = 0; p < H * W; ++p) {
    const double dx = mask.data()[p] - mx, dy = sd[static_cast<size_t>(p)] - my;
    cxy += dx * dy;
    cxx += dx * dx;
    cyy += dy * dy;
  }
  CHECK(cxy / std::sqrt(cxx * cyy) > 0.99);
}

TEST_CASE("adjacent pixels are uncorrelated") {
  const int64_t n = 500000;
  NoiseSpec spec;
  spec.sigma = 25.0 / 255.0;
  spec.seed = 17;
  auto clean = Tensor<double>::zeros({1, 1, 1000, 1000});
  auto noisy = apply_noise(clean, spec);
  double cov = 0;
  const double var = (25.0 / 255.0) * (25.0 / 255.0);
  for (int64_t i = 0; i < n; ++i)
    cov += noisy.data()[2 * i] * noisy.data()[2 * i + 1];
  cov /= static_cast<double>(n);
  // SE of the covariance estimate for independent zero-mean pairs
  const double se = var / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(cov) < 3 * se);
}

TEST_CASE("identical specs give bitwise-identical noise") {
  NoiseSpec spec;
  spec.kind = NoiseKind::kNonIid;
  spec.mask_id = MaskId::kTest3;
  spec.seed = 4;
  auto clean = testutil::random_tensor<float>({1, 3, 32, 32}, 5, 0.0, 1.0);
  CHECK(testutil::bitwise_equal(apply_noise(clean, spec, 2),
                                apply_noise(clean, spec, 2)));
  CHECK_FALSE(testutil::bitwise_equal(apply_noise(clean, spec, 2),
                                      apply_noise(clean, spec, 3)));
  spec.seed = 5;
  CHECK_FALSE(testutil::bitwise_equal(apply_noise(clean, spec, 2),
                                      [&] {
                                        NoiseSpec s2 = spec;
                                        s2.seed = 6;
                                        return apply_noise(clean, s2, 2);
                                      }()));
}

TEST_CASE("noise spec parsing") {
  auto a = NoiseSpec::parse("awgn:25", 1);
  CHECK(a.kind == NoiseKind::kAwgn);
  CHECK(a.sigma == doctest::Approx(25.0 / 255.0));
  auto b = NoiseSpec::parse("noniid:test2", 2);
  CHECK(b.kind == NoiseKind::kNonIid);
  CHECK(b.mask_id == MaskId::kTest2);
  auto c = NoiseSpec::parse("noniid:const:30", 3);
  CHECK(c.mask_id == MaskId::kConstant);
  CHECK(c.constant_value == doctest::Approx(30.0 / 255.0));
  CHECK_THROWS_AS(NoiseSpec::parse("salt", 0), ConfigError);
  CHECK_THROWS_AS(NoiseSpec::parse("awgn", 0), ConfigError);
  CHECK_THROWS_AS(NoiseSpec::parse("noniid:bogus", 0), ConfigError);
}
