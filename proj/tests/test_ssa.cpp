#include <cmath>

#include "doctest.h"
#include "nbnet/gradcheck.hpp"
#include "nbnet/ssa.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace nbnet;
using testutil::random_tensor;

namespace {

template <typename T>
SsaModule<T> make_module(int64_t channels, SsaConfig cfg, T eps, uint64_t seed) {
  SequentialRng rng(seed);
  return SsaModule<T>::init(channels, cfg, eps, T(0.2), rng);
}

}  // namespace

TEST_CASE("generate_basis produces B x (H*W) x K") {
  auto m = make_module<float>(32, SsaConfig{}, 1e-4f, 1);
  auto x1 = random_tensor<float>({1, 32, 16, 16}, 2);
  auto x2 = random_tensor<float>({1, 32, 16, 16}, 3);
  auto V = m.generate_basis(x1, x2);
  CHECK(V.shape() == Shape{1, 256, 16});
}

TEST_CASE("zero basis block gives a degenerate basis under eps = 0") {
  SsaConfig cfg;
  cfg.k = 4;
  auto m = make_module<double>(8, cfg, 0.0, 4);
  ParamList<double> params;
  m.collect("ssa", params);
  for (auto& p : params)
    for (auto& v : p.tensor.mutable_data()) v = 0.0;
  auto x1 = random_tensor<double>({1, 8, 8, 8}, 5);
  auto x2 = random_tensor<double>({1, 8, 8, 8}, 6);
  auto V = m.generate_basis(x1, x2);
  for (double v : V.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(m.forward(x1, x2), NumericalError);
}

TEST_CASE("generate_basis is deterministic") {
  auto m = make_module<float>(8, SsaConfig{.k = 4}, 1e-4f, 7);
  auto x1 = random_tensor<float>({2, 8, 8, 8}, 8);
  auto x2 = random_tensor<float>({2, 8, 8, 8}, 9);
  CHECK(testutil::bitwise_equal(m.generate_basis(x1, x2),
                                m.generate_basis(x1, x2)));
}

TEST_CASE("project fixes vectors already in the span") {
  const int64_t N = 16, K = 4, C = 3, H = 4, W = 4;
  auto V = random_tensor<double>({1, N, K}, 10);
  auto A = random_tensor<double>({1, K, C}, 11);
  auto X_flat = bmm(V, A);  // lies in span(V) per channel
  auto X = unflatten_spatial(X_flat, H, W);
  auto Y = project(V, X, 0.0);
  CHECK(oracle::max_abs_diff(Y, X) < 1e-4);
}

TEST_CASE("K=1 all-ones basis projects each channel to its spatial mean") {
  const int64_t H = 4, W = 4, C = 2;
  auto V = Tensor<double>::filled({1, H * W, 1}, 1.0);
  auto X = random_tensor<double>({1, C, H, W}, 12);
  auto Y = project(V, X, 0.0);
  for (int64_t c = 0; c < C; ++c) {
    double mean = 0;
    for (int64_t p = 0; p < H * W; ++p) mean += X.data()[c * H * W + p];
    mean /= (H * W);
    for (int64_t p = 0; p < H * W; ++p)
      CHECK(Y.data()[c * H * W + p] == doctest::Approx(mean).epsilon(1e-9));
  }
}

TEST_CASE("project matches the explicit P*X oracle") {
  const int64_t N = 16, K = 4, C = 2;
  auto V = random_tensor<double>({1, N, K}, 13);
  auto X = random_tensor<double>({1, C, 4, 4}, 14);
  auto Y = project(V, X, 0.0);
  // oracle works on N x C layout
  std::vector<double> xf(N * C), vv(V.data().begin(), V.data().end());
  for (int64_t c = 0; c < C; ++c)
    for (int64_t p = 0; p < N; ++p) xf[p * C + c] = X.data()[c * N + p];
  auto ref = oracle::explicit_projection(vv, xf, N, K, C);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t p = 0; p < N; ++p)
      CHECK(std::abs(Y.data()[c * N + p] - ref[p * C + c]) < 1e-4);
}

TEST_CASE("ssa_forward preserves shape with the default config") {
  auto m = make_module<float>(32, SsaConfig{}, 1e-4f, 15);
  auto x1 = random_tensor<float>({1, 32, 16, 16}, 16);
  auto x2 = random_tensor<float>({1, 32, 16, 16}, 17);
  auto y = m.forward(x1, x2);
  CHECK(y.shape() == x1.shape());
}

TEST_CASE("dot-product variant agrees with projection for orthonormal V") {
  const int64_t N = 16, K = 4, C = 3;
  // disjoint indicators scaled to unit norm -> orthonormal columns
  auto V = Tensor<double>::zeros({1, N, K});
  for (int64_t k = 0; k < K; ++k)
    for (int64_t p = k * 4; p < (k + 1) * 4; ++p)
      V.mutable_data()[p * K + k] = 0.5;
  auto X = random_tensor<double>({1, C, 4, 4}, 18);
  auto proj = project(V, X, 0.0);
  auto dot = dot_product_attention(V, X);
  CHECK(oracle::max_abs_diff(proj, dot) < 1e-5);
}

TEST_CASE("scaling V leaves projection invariant but scales dot product by 4") {
  const int64_t N = 16, K = 4, C = 2;
  auto V = random_tensor<double>({1, N, K}, 19);
  auto V2 = V.detached_copy();
  for (auto& v : V2.mutable_data()) v *= 2.0;
  auto X = random_tensor<double>({1, C, 4, 4}, 20);

  auto p1 = project(V, X, 0.0);
  auto p2 = project(V2, X, 0.0);
  CHECK(oracle::max_abs_diff(p1, p2) < 1e-4);

  auto d1 = dot_product_attention(V, X);
  auto d2 = dot_product_attention(V2, X);
  for (int64_t i = 0; i < d1.numel(); ++i)
    CHECK(d2.data()[i] ==
          doctest::Approx(4.0 * d1.data()[i]).epsilon(1e-4));
}

TEST_CASE("projection is invariant under any basis change V -> VD") {
  const int64_t N = 20, K = 3, C = 2;
  auto V = random_tensor<double>({1, N, K}, 21);
  auto D = random_tensor<double>({K, K}, 22);
  for (int64_t k = 0; k < K; ++k) D.mutable_data()[k * K + k] += 2.0;  // well-conditioned
  auto VD = Tensor<double>::zeros({1, N, K});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t j = 0; j < K; ++j) {
      double s = 0;
      for (int64_t k = 0; k < K; ++k)
        s += V.data()[n * K + k] * D.data()[k * K + j];
      VD.mutable_data()[n * K + j] = s;
    }
  auto X = random_tensor<double>({1, C, 4, 5}, 23);
  auto p1 = project(V, X, 0.0);
  auto p2 = project(VD, X, 0.0);
  CHECK(oracle::max_abs_diff(p1, p2) < 1e-4);
}

TEST_CASE("projection does not expand per-channel energy") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const int64_t C = 3, H = 6, W = 5, K = 4;
    auto V = random_tensor<double>({1, H * W, K}, 100 + seed);
    auto X = random_tensor<double>({1, C, H, W}, 200 + seed);
    auto Y = project(V, X, 0.0);
    for (int64_t c = 0; c < C; ++c) {
      double nx = 0, ny = 0;
      for (int64_t p = 0; p < H * W; ++p) {
        nx += X.data()[c * H * W + p] * X.data()[c * H * W + p];
        ny += Y.data()[c * H * W + p] * Y.data()[c * H * W + p];
      }
      CHECK(std::sqrt(ny) <= std::sqrt(nx) * (1.0 + 1e-5) + 1e-12);
    }
  }
}

TEST_CASE("ssa_forward is idempotent with a frozen basis") {
  SsaConfig cfg;
  cfg.k = 4;
  auto m = make_module<double>(6, cfg, 0.0, 24);
  auto x1 = random_tensor<double>({1, 6, 6, 6}, 25);
  auto x2 = random_tensor<double>({1, 6, 6, 6}, 26);
  auto V = m.generate_basis(x1, x2);
  auto once = project(V, x1, 0.0);
  auto twice = project(V, once, 0.0);
  CHECK(oracle::max_abs_diff(once, twice) < 1e-4);
}

TEST_CASE("gradcheck through ssa_forward") {
  SsaConfig cfg;
  cfg.k = 3;
  for (auto variant : {SsaVariant::kProjection, SsaVariant::kDotProduct}) {
    cfg.variant = variant;
    auto m = make_module<double>(4, cfg, variant == SsaVariant::kProjection
                                              ? 1e-4 : 0.0,
                                 27);
    ParamList<double> params;
    m.collect("ssa", params);
    auto x1 = random_tensor<double>({1, 4, 8, 8}, 28);
    auto x2 = random_tensor<double>({1, 4, 8, 8}, 29);
    auto probe = random_tensor<double>({1, 4, 8, 8}, 30);

    std::vector<Tensor<double>> inputs{x1, x2};
    std::vector<std::string> names{"x1", "x2"};
    for (auto& p : params) {
      inputs.push_back(p.tensor);
      names.push_back(p.name);
    }
    auto report = gradcheck(
        [&](const std::vector<Tensor<double>>& in) {
          // rebind module weights to the checked tensors
          SsaModule<double> probe_m = m;
          probe_m.basis_block.w1 = in[2];
          probe_m.basis_block.b1 = in[3];
          probe_m.basis_block.w2 = in[4];
          probe_m.basis_block.b2 = in[5];
          probe_m.basis_block.skip_w = in[6];
          probe_m.basis_block.skip_b = in[7];
          return sum(mul(probe_m.forward(in[0], in[1]), probe));
        },
        inputs, names, {.max_coords = 40});
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-4);
  }
}
