// Acceptance suite: one criterion per entry, one pass/fail line each.
// Run with no arguments for the full suite, or pass criterion numbers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nbnet/gradcheck_suites.hpp"
#include "nbnet/image_io.hpp"
#include "nbnet/metrics.hpp"
#include "nbnet/net.hpp"
#include "nbnet/noise.hpp"
#include "nbnet/pipeline.hpp"
#include "nbnet/ssa.hpp"
#include "../oracles.hpp"
#include "../synth_images.hpp"

using namespace nbnet;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

Tensor<double> rnd64(Shape shape, uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  SequentialRng rng(seed);
  std::vector<double> d(static_cast<size_t>(numel(shape)));
  for (auto& v : d) v = lo + (hi - lo) * rng.uniform();
  return Tensor<double>::from_data(std::move(shape), std::move(d));
}

// --------------------------------------------------------------------------
// 1. gradient correctness

bool criterion1(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  auto checks = gradcheck_suite("all");
  double worst = 0;
  bool ok = true;
  for (const auto& c : checks) {
    worst = std::max(worst, c.report.max_rel_error);
    ok = ok && c.report.passed;
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << checks.size() << " checks, worst rel err " << worst << ", " << dt
     << " s";
  detail = os.str();
  return ok && worst < 1e-4 && dt < 300.0;
}

// --------------------------------------------------------------------------
// 2. projection algebra on 100 random instances

bool criterion2(std::string& detail) {
  SequentialRng dims(2024);
  double worst_oracle = 0, worst_idem = 0, worst_orth = 0, worst_change = 0,
         worst_energy = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int64_t K = 1 + static_cast<int64_t>(dims.uniform_int(8));
    const int64_t N = K + 1 + static_cast<int64_t>(dims.uniform_int(
                              static_cast<uint64_t>(64 - K)));
    const int64_t C = 1 + static_cast<int64_t>(dims.uniform_int(4));
    auto V = rnd64({1, N, K}, 3000 + inst);
    auto X = rnd64({1, N, C}, 4000 + inst);

    auto Y = batched_gram_solve(V, X, 0.0);

    std::vector<double> vv(V.data().begin(), V.data().end());
    std::vector<double> xx(X.data().begin(), X.data().end());
    auto ref = oracle::explicit_projection(vv, xx, N, K, C);
    for (int64_t i = 0; i < N * C; ++i)
      worst_oracle = std::max(worst_oracle, std::abs(Y.data()[i] - ref[i]));

    auto Y2 = batched_gram_solve(V, Y, 0.0);
    worst_idem = std::max(worst_idem, oracle::max_abs_diff(Y2, Y));

    double xmax = 0;
    for (double v : X.data()) xmax = std::max(xmax, std::abs(v));
    for (int64_t k = 0; k < K; ++k)
      for (int64_t c = 0; c < C; ++c) {
        double dot = 0;
        for (int64_t n = 0; n < N; ++n)
          dot += V.data()[n * K + k] * (X.data()[n * C + c] - Y.data()[n * C + c]);
        worst_orth = std::max(worst_orth, std::abs(dot) / xmax);
      }

    // basis change V -> VD with a well-conditioned D
    auto D = rnd64({K, K}, 5000 + inst, -0.5, 0.5);
    for (int64_t k = 0; k < K; ++k) D.mutable_data()[k * K + k] += 1.5;
    auto VD = Tensor<double>::zeros({1, N, K});
    for (int64_t n = 0; n < N; ++n)
      for (int64_t j = 0; j < K; ++j) {
        double s = 0;
        for (int64_t k = 0; k < K; ++k)
          s += V.data()[n * K + k] * D.data()[k * K + j];
        VD.mutable_data()[n * K + j] = s;
      }
    worst_change = std::max(
        worst_change,
        oracle::max_abs_diff(batched_gram_solve(VD, X, 0.0), Y));

    for (int64_t c = 0; c < C; ++c) {
      double nx = 0, ny = 0;
      for (int64_t n = 0; n < N; ++n) {
        nx += X.data()[n * C + c] * X.data()[n * C + c];
        ny += Y.data()[n * C + c] * Y.data()[n * C + c];
      }
      worst_energy = std::max(worst_energy, std::sqrt(ny) - std::sqrt(nx));
    }
  }
  std::ostringstream os;
  os << "oracle " << worst_oracle << ", idem " << worst_idem << ", orth "
     << worst_orth << ", basis-change " << worst_change << ", energy "
     << worst_energy;
  detail = os.str();
  return worst_oracle < 1e-4 && worst_idem < 1e-5 && worst_orth < 1e-3 &&
         worst_change < 1e-4 && worst_energy < 1e-5;
}

// --------------------------------------------------------------------------
// 3. dot-product ablation mechanism

bool criterion3(std::string& detail) {
  const int64_t N = 16, K = 4, C = 3;
  auto V = Tensor<double>::zeros({1, N, K});
  for (int64_t k = 0; k < K; ++k)
    for (int64_t p = k * 4; p < (k + 1) * 4; ++p)
      V.mutable_data()[p * K + k] = 0.5;  // orthonormal columns
  auto X = rnd64({1, C, 4, 4}, 31);
  const double agree =
      oracle::max_abs_diff(project(V, X, 0.0), dot_product_attention(V, X));

  auto Vr = rnd64({1, N, K}, 32);
  auto Vr2 = Vr.detached_copy();
  for (auto& v : Vr2.mutable_data()) v *= 2.0;
  const double proj_drift =
      oracle::max_abs_diff(project(Vr, X, 0.0), project(Vr2, X, 0.0));
  auto d1 = dot_product_attention(Vr, X);
  auto d2 = dot_product_attention(Vr2, X);
  double scale_err = 0;
  for (int64_t i = 0; i < d1.numel(); ++i) {
    const double denom = std::max(std::abs(4.0 * d1.data()[i]), 1e-9);
    scale_err = std::max(scale_err,
                         std::abs(d2.data()[i] - 4.0 * d1.data()[i]) / denom);
  }
  std::ostringstream os;
  os << "orthonormal agreement " << agree << ", projection drift under 2x "
     << proj_drift << ", dot-product 4x relative error " << scale_err;
  detail = os.str();
  return agree < 1e-5 && proj_drift < 1e-4 && scale_err < 1e-4;
}

// --------------------------------------------------------------------------
// 4. overfit convergence (desk preset "overfit1")

bool criterion4(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  NetworkConfig ncfg = network_preset("tiny");
  TrainConfig tcfg = train_preset("overfit1");
  NoiseSpec spec;
  spec.sigma = 25.0 / 255.0;
  spec.seed = tcfg.seed;

  Dataset<float> data;
  data.items.push_back({"patch", testutil::synth_clean_image(64, 64, 424242), {}});

  auto result = train(ncfg, tcfg, data, std::optional<NoiseSpec>(spec),
                      Dataset<float>{});
  if (result.aborted) {
    detail = "training aborted: " + result.abort_reason;
    return false;
  }
  const double first = result.loss_curve.front();
  const double last = result.loss_curve.back();

  NoGradGuard ng;
  const auto& clean = data.items[0].clean;
  auto noisy = apply_noise(clean, spec, /*stream=*/0);  // the frozen realization
  const double noisy_psnr = psnr(clean, clamp01(noisy));
  const double out_psnr =
      psnr(clean, clamp01(result.state.net.forward(noisy)));
  std::ostringstream os;
  os << "loss " << first << " -> " << last << ", noisy " << noisy_psnr
     << " dB, output " << out_psnr << " dB (need +6), " << seconds_since(t0)
     << " s";
  detail = os.str();
  return last < 0.25 * first && out_psnr >= noisy_psnr + 6.0 &&
         seconds_since(t0) < 900.0;
}

// --------------------------------------------------------------------------
// 5. generalization smoke test (desk preset "tiny_awgn", K=4 vs K=1)

bool criterion5(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tcfg = train_preset("tiny_awgn");
  NoiseSpec spec;
  spec.sigma = 25.0 / 255.0;
  spec.seed = tcfg.seed;

  Dataset<float> tr, val;
  for (int i = 0; i < 20; ++i)
    tr.items.push_back(
        {"train" + std::to_string(i), testutil::synth_clean_image(96, 96, 7000 + i), {}});
  for (int i = 0; i < 5; ++i)
    val.items.push_back(
        {"val" + std::to_string(i), testutil::synth_clean_image(64, 64, 8000 + i), {}});

  auto run = [&](const char* preset) {
    auto r = train(network_preset(preset), tcfg, tr,
                   std::optional<NoiseSpec>(spec), Dataset<float>{});
    auto rep = evaluate(r.state.net, val, std::optional<NoiseSpec>(spec));
    return std::pair<double, double>(rep.mean_psnr_db, rep.mean_noisy_psnr_db);
  };
  auto [k4_psnr, baseline] = run("tiny");
  auto [k1_psnr, baseline2] = run("tiny_k1");
  (void)baseline2;

  std::ostringstream os;
  os << "noisy baseline " << baseline << " dB, K=4 " << k4_psnr << " dB, K=1 "
     << k1_psnr << " dB, " << seconds_since(t0) / 60.0 << " min";
  detail = os.str();
  return k4_psnr > baseline && k4_psnr > k1_psnr &&
         seconds_since(t0) < 7200.0;
}

// --------------------------------------------------------------------------
// 6. noise statistics

bool criterion6(std::string& detail) {
  const int64_t H = 12, W = 12, B = 100, reps = 1000;  // 1e5 draws per pixel
  auto mask = make_mask<double>(MaskId::kTrain, H, W, 77);
  auto zeros = Tensor<double>::zeros({B, 1, H, W});
  std::vector<double> sq(static_cast<size_t>(H * W), 0.0);
  for (int64_t r = 0; r < reps; ++r) {
    auto n = apply_noise_field(zeros, mask, 9, r);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t p = 0; p < H * W; ++p)
        sq[static_cast<size_t>(p)] +=
            n.data()[b * H * W + p] * n.data()[b * H * W + p];
  }
  double worst_rel = 0;
  for (int64_t p = 0; p < H * W; ++p) {
    const double sd = std::sqrt(sq[static_cast<size_t>(p)] / (B * reps));
    worst_rel = std::max(worst_rel,
                         std::abs(sd - mask.data()[p]) / mask.data()[p]);
  }

  NoiseSpec awgn;
  awgn.kind = NoiseKind::kAwgn;
  awgn.sigma = 25.0 / 255.0;
  awgn.seed = 13;
  NoiseSpec constant;
  constant.kind = NoiseKind::kNonIid;
  constant.mask_id = MaskId::kConstant;
  constant.constant_value = 25.0 / 255.0;
  constant.seed = 13;
  auto clean = testutil::synth_clean_image(32, 32, 5);
  auto na = apply_noise(clean, awgn, 3);
  auto nc = apply_noise(clean, constant, 3);
  bool bitwise = true;
  for (int64_t i = 0; i < na.numel(); ++i)
    bitwise = bitwise && na.data()[i] == nc.data()[i];

  std::ostringstream os;
  os << "worst per-pixel std error " << worst_rel * 100 << "% (limit 2%), "
     << "constant-mask == awgn bitwise: " << (bitwise ? "yes" : "no");
  detail = os.str();
  return worst_rel < 0.02 && bitwise;
}

// --------------------------------------------------------------------------
// 7. metric oracles

bool criterion7(std::string& detail) {
  double worst_psnr = 0, worst_ssim = 0, worst_sym = 0;
  bool self_one = true;
  for (uint64_t s = 0; s < 20; ++s) {
    auto a = rnd64({1, 3, 24, 18}, 9000 + s, 0.0, 1.0);
    auto b = rnd64({1, 3, 24, 18}, 9500 + s, 0.0, 1.0);
    worst_psnr = std::max(worst_psnr,
                          std::abs(psnr(a, b) - oracle::psnr(a, b, 1.0)));
    worst_ssim = std::max(
        worst_ssim, std::abs(ssim(a, b) - oracle::ssim_windowed(
                                              oracle::luma(a), oracle::luma(b),
                                              24, 18, 1.0)));
    worst_sym = std::max(worst_sym, std::abs(psnr(a, b) - psnr(b, a)));
    worst_sym = std::max(worst_sym, std::abs(ssim(a, b) - ssim(b, a)));
    self_one = self_one && ssim(a, a) == 1.0;
  }
  std::ostringstream os;
  os << "psnr err " << worst_psnr << " dB, ssim err " << worst_ssim
     << ", symmetry " << worst_sym << ", ssim(a,a)=1: "
     << (self_one ? "yes" : "no");
  detail = os.str();
  return worst_psnr < 1e-9 && worst_ssim < 1e-6 && worst_sym < 1e-12 &&
         self_one;
}

// --------------------------------------------------------------------------
// 8. cost accounting

bool criterion8(std::string& detail) {
  NetworkConfig cfg;  // default
  auto rep = count_params_and_flops(cfg, 256, 256);
  auto net = NbNet<float>::build(cfg, 1);
  const int64_t built = net.parameter_count();
  const double target = 13.31e6;
  const double rel = std::abs(rep.params - target) / target;
  std::ostringstream os;
  os << "params " << rep.params << " vs target 13.31e6 (" << rel * 100
     << "%), counter==built: " << (rep.params == built ? "yes" : "no") << " [";
  for (const auto& it : rep.breakdown)
    os << " " << it.module << "=" << it.params;
  os << " ]";
  detail = os.str();
  return rel <= 0.10 && rep.params == built;
}

// --------------------------------------------------------------------------
// 9. determinism and persistence

bool criterion9(std::string& detail) {
  Dataset<float> data;
  for (int i = 0; i < 3; ++i)
    data.items.push_back(
        {"d" + std::to_string(i), testutil::synth_clean_image(48, 48, 600 + i), {}});
  NetworkConfig ncfg = network_preset("tiny");
  TrainConfig tcfg;
  tcfg.total_iters = 12;
  tcfg.batch = 2;
  tcfg.patch = 16;
  tcfg.seed = 21;
  tcfg.log_every = 1;
  NoiseSpec spec;
  spec.sigma = 25.0 / 255.0;
  spec.seed = 21;

  auto r1 = train(ncfg, tcfg, data, std::optional<NoiseSpec>(spec), Dataset<float>{});
  auto r2 = train(ncfg, tcfg, data, std::optional<NoiseSpec>(spec), Dataset<float>{});
  bool curve_bitwise = r1.loss_curve.size() == r2.loss_curve.size();
  for (size_t i = 0; curve_bitwise && i < r1.loss_curve.size(); ++i)
    curve_bitwise = r1.loss_curve[i] == r2.loss_curve[i];
  curve_bitwise = curve_bitwise && r1.log_lines == r2.log_lines;

  const std::string path = "acceptance_ckpt.nbt";
  save_checkpoint(r1.state, path);
  auto loaded = load_checkpoint<float>(path);
  bool ckpt_bitwise = true;
  auto pa = r1.state.net.parameters(), pb = loaded.net.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    for (int64_t j = 0; j < pa[i].tensor.numel(); ++j)
      ckpt_bitwise = ckpt_bitwise &&
                     pa[i].tensor.data()[j] == pb[i].tensor.data()[j];
  fs::remove(path);

  auto img = testutil::synth_clean_image(32, 32, 11);
  const std::string ipath = "acceptance_img.ppm";
  write_image(img, ipath);
  auto back = read_image<float>(ipath);
  double worst = 0;
  for (int64_t i = 0; i < img.numel(); ++i)
    worst = std::max(worst, std::abs(double(img.data()[i]) - back.data()[i]));
  fs::remove(ipath);

  std::ostringstream os;
  os << "loss curve bitwise: " << (curve_bitwise ? "yes" : "no")
     << ", checkpoint bitwise: " << (ckpt_bitwise ? "yes" : "no")
     << ", image round-trip max err " << worst << " (limit " << 1.0 / 510.0
     << ")";
  detail = os.str();
  return curve_bitwise && ckpt_bitwise && worst <= 1.0 / 510.0 + 1e-9;
}

struct Criterion {
  int id;
  const char* title;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness (gradcheck --module all)", criterion1},
      {2, "projection algebra suite", criterion2},
      {3, "dot-product ablation mechanism", criterion3},
      {4, "overfit convergence (overfit1)", criterion4},
      {5, "generalization smoke test (tiny_awgn, K=4 vs K=1)", criterion5},
      {6, "noise statistics", criterion6},
      {7, "metric oracles", criterion7},
      {8, "cost accounting", criterion8},
      {9, "determinism and persistence", criterion9},
  };

  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all_ok = true;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", c.id,
                c.title, detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
