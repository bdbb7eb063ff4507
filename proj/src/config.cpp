#include "nbnet/config.hpp"

#include <map>

#include <nlohmann/json.hpp>

#include "nbnet/net.hpp"

namespace nbnet {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string to_string(SsaVariant v) {
  return v == SsaVariant::kProjection ? "projection" : "dot_product";
}
SsaVariant variant_from(const std::string& s) {
  if (s == "projection") return SsaVariant::kProjection;
  if (s == "dot_product") return SsaVariant::kDotProduct;
  throw ConfigError("unknown ssa variant '" + s + "'");
}

std::string to_string(BasisSource b) {
  switch (b) {
    case BasisSource::kX1Only: return "x1_only";
    case BasisSource::kX2Only: return "x2_only";
    default: return "x1_and_x2";
  }
}
BasisSource source_from(const std::string& s) {
  if (s == "x1_only") return BasisSource::kX1Only;
  if (s == "x2_only") return BasisSource::kX2Only;
  if (s == "x1_and_x2") return BasisSource::kX1AndX2;
  throw ConfigError("unknown basis source '" + s + "'");
}

std::string to_string(ProjectedInput p) {
  return p == ProjectedInput::kX1 ? "x1" : "x2";
}
ProjectedInput projected_from(const std::string& s) {
  if (s == "x1") return ProjectedInput::kX1;
  if (s == "x2") return ProjectedInput::kX2;
  throw ConfigError("unknown projected input '" + s + "'");
}

std::string to_string(Fusion f) {
  return f == Fusion::kConcatConv ? "concat_conv" : "add";
}
Fusion fusion_from(const std::string& s) {
  if (s == "concat_conv") return Fusion::kConcatConv;
  if (s == "add") return Fusion::kAdd;
  throw ConfigError("unknown fusion '" + s + "'");
}

ordered_json ssa_to_json(const SsaConfig& c) {
  ordered_json j;
  j["k"] = c.k;
  j["variant"] = to_string(c.variant);
  j["basis_source"] = to_string(c.basis_source);
  j["projected_input"] = to_string(c.projected_input);
  j["head_activation"] = c.head_activation;
  return j;
}

SsaConfig ssa_from_json(const ordered_json& j) {
  SsaConfig c;
  c.k = j.value("k", c.k);
  if (j.contains("variant")) c.variant = variant_from(j["variant"]);
  if (j.contains("basis_source")) c.basis_source = source_from(j["basis_source"]);
  if (j.contains("projected_input"))
    c.projected_input = projected_from(j["projected_input"]);
  c.head_activation = j.value("head_activation", c.head_activation);
  return c;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& c) {
  ordered_json j;
  j["stages"] = c.stages;
  j["base_channels"] = c.base_channels;
  j["blocks_per_stage"] = c.blocks_per_stage;
  j["in_channels"] = c.in_channels;
  j["ssa_enabled"] = c.ssa_enabled;
  j["ssa"] = ssa_to_json(c.ssa);
  j["skip_blocks"] = c.skip_blocks;
  j["skip_mid_channels"] = c.skip_mid_channels;
  j["fusion"] = to_string(c.fusion);
  j["leaky_slope"] = c.leaky_slope;
  j["gram_eps"] = c.gram_eps;
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("network config: invalid JSON: ") + ex.what());
  }
  NetworkConfig c;
  c.stages = j.value("stages", c.stages);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.ssa_enabled = j.value("ssa_enabled", c.ssa_enabled);
  if (j.contains("ssa")) c.ssa = ssa_from_json(j["ssa"]);
  c.skip_blocks = j.value("skip_blocks", c.skip_blocks);
  c.skip_mid_channels = j.value("skip_mid_channels", c.skip_mid_channels);
  if (j.contains("fusion")) c.fusion = fusion_from(j["fusion"]);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.gram_eps = j.value("gram_eps", c.gram_eps);
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["lr0"] = c.lr0;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps_adam"] = c.eps_adam;
  j["total_iters"] = c.total_iters;
  j["batch"] = c.batch;
  j["patch"] = c.patch;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  j["log_every"] = c.log_every;
  j["augment_rotate"] = c.augment_rotate;
  j["augment_flip"] = c.augment_flip;
  j["grad_clip"] = c.grad_clip;
  j["frozen_noise"] = c.frozen_noise;
  j["eta_min"] = c.eta_min;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("train config: invalid JSON: ") + ex.what());
  }
  TrainConfig c;
  c.lr0 = j.value("lr0", c.lr0);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps_adam = j.value("eps_adam", c.eps_adam);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.batch = j.value("batch", c.batch);
  c.patch = j.value("patch", c.patch);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.log_every = j.value("log_every", c.log_every);
  c.augment_rotate = j.value("augment_rotate", c.augment_rotate);
  c.augment_flip = j.value("augment_flip", c.augment_flip);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.frozen_noise = j.value("frozen_noise", c.frozen_noise);
  c.eta_min = j.value("eta_min", c.eta_min);
  return c;
}

std::vector<std::pair<std::string, NetworkConfig>> ablation_presets() {
  std::vector<std::pair<std::string, NetworkConfig>> out;
  NetworkConfig base;  // ssa + skip chains, K=16

  auto push = [&](const std::string& name, NetworkConfig c) {
    out.emplace_back(name, std::move(c));
  };

  {
    NetworkConfig c = base;
    c.ssa_enabled = false;
    c.skip_blocks = false;
    push("unet_plain", c);
  }
  {
    NetworkConfig c = base;
    c.skip_blocks = false;
    push("unet_ssa", c);
  }
  {
    NetworkConfig c = base;
    c.ssa_enabled = false;
    push("unet_blocks", c);
  }
  push("unet_blocks_ssa", base);

  for (int64_t k : {int64_t(1), int64_t(8), int64_t(16)}) {
    NetworkConfig c = base;
    c.ssa.k = k;
    push("k" + std::to_string(k), c);
  }
  {
    NetworkConfig c = base;
    c.ssa.variant = SsaVariant::kDotProduct;
    push("dotprod", c);
  }

  // Proj(a, b): project a onto the basis generated from b.
  auto proj = [&](const std::string& name, ProjectedInput a, BasisSource b) {
    NetworkConfig c = base;
    c.ssa.projected_input = a;
    c.ssa.basis_source = b;
    push(name, c);
  };
  proj("proj_x1_given_x1", ProjectedInput::kX1, BasisSource::kX1Only);
  proj("proj_x1_given_x2", ProjectedInput::kX1, BasisSource::kX2Only);
  proj("proj_x2_given_x2", ProjectedInput::kX2, BasisSource::kX2Only);
  proj("proj_x2_given_x1", ProjectedInput::kX2, BasisSource::kX1Only);
  proj("proj_x2_given_x1x2", ProjectedInput::kX2, BasisSource::kX1AndX2);
  proj("proj_x1_given_x1x2", ProjectedInput::kX1, BasisSource::kX1AndX2);

  // Desk-scale nets for the laptop experiments.
  {
    NetworkConfig c = base;
    c.stages = 2;
    c.base_channels = 8;
    c.ssa.k = 4;
    push("tiny", c);
    c.ssa.k = 1;
    push("tiny_k1", c);
  }
  return out;
}

NetworkConfig network_preset(const std::string& name) {
  for (auto& [n, c] : ablation_presets())
    if (n == name) return c;
  throw ConfigError("unknown network preset '" + name + "'");
}

bool is_network_preset(const std::string& name) {
  for (auto& [n, c] : ablation_presets())
    if (n == name) return true;
  return false;
}

std::vector<std::pair<std::string, TrainConfig>> train_presets() {
  std::vector<std::pair<std::string, TrainConfig>> out;
  {
    // Single-patch convergence probe: one 64x64 patch, one frozen noise
    // realization, tiny net.
    TrainConfig c;
    c.lr0 = 1e-3;
    c.total_iters = 2000;
    c.batch = 1;
    c.patch = 64;
    c.seed = 7;
    c.augment_rotate = false;
    c.augment_flip = false;
    c.frozen_noise = true;
    c.eval_every = 0;
    c.log_every = 100;
    out.emplace_back("overfit1", c);
  }
  {
    // Small-corpus generalization run.
    TrainConfig c;
    c.lr0 = 1e-3;
    c.total_iters = 20000;
    c.batch = 4;
    c.patch = 32;
    c.seed = 11;
    c.eval_every = 2000;
    c.log_every = 200;
    out.emplace_back("tiny_awgn", c);
  }
  return out;
}

TrainConfig train_preset(const std::string& name) {
  for (auto& [n, c] : train_presets())
    if (n == name) return c;
  throw ConfigError("unknown train preset '" + name + "'");
}

bool is_train_preset(const std::string& name) {
  for (auto& [n, c] : train_presets())
    if (n == name) return true;
  return false;
}

// ---------------------------------------------------------------------------
// cost accounting

namespace {

int64_t conv_params(int64_t cin, int64_t cout, int64_t k, bool bias) {
  return cin * cout * k * k + (bias ? cout : 0);
}
double conv_macs(int64_t cin, int64_t cout, int64_t k, int64_t h, int64_t w) {
  return static_cast<double>(cin) * cout * k * k * h * w;
}

int64_t cb_params(int64_t cin, int64_t cout) {
  int64_t p = conv_params(cin, cout, 3, true) + conv_params(cout, cout, 3, true);
  if (cin != cout) p += conv_params(cin, cout, 1, true);
  return p;
}
double cb_macs(int64_t cin, int64_t cout, int64_t h, int64_t w) {
  double m = conv_macs(cin, cout, 3, h, w) + conv_macs(cout, cout, 3, h, w);
  if (cin != cout) m += conv_macs(cin, cout, 1, h, w);
  return m;
}

}  // namespace

CostReport count_params_and_flops(const NetworkConfig& cfg, int64_t height,
                                  int64_t width) {
  cfg.validate();
  const int64_t div = int64_t(1) << cfg.stages;
  check(height % div == 0 && width % div == 0,
        "cost: input size must be divisible by 2^stages");

  CostReport rep;
  std::map<std::string, CostItem> items;
  auto item = [&](const std::string& module) -> CostItem& {
    auto& it = items[module];
    it.module = module;
    return it;
  };
  auto h_at = [&](int L) { return height >> L; };
  auto w_at = [&](int L) { return width >> L; };

  int64_t prev = cfg.in_channels;
  for (int L = 0; L <= cfg.stages; ++L) {
    const int64_t c = cfg.channels_at(L);
    auto& enc = item("encoder");
    for (int i = 0; i < cfg.blocks_per_stage; ++i) {
      const int64_t cin = i == 0 ? prev : c;
      enc.params += cb_params(cin, c);
      enc.macs += cb_macs(cin, c, h_at(L), w_at(L));
    }
    if (L < cfg.stages) {
      enc.params += conv_params(c, c, 4, false);
      enc.macs += conv_macs(c, c, 4, h_at(L + 1), w_at(L + 1));
    }
    prev = c;
  }

  for (int L = cfg.stages - 1; L >= 0; --L) {
    const int64_t c = cfg.channels_at(L);
    const int64_t c_deep = cfg.channels_at(L + 1);
    const int64_t h = h_at(L), w = w_at(L);
    auto& dec = item("decoder");
    dec.params += 4 * c_deep * c + c;  // transposed conv
    dec.macs += 4.0 * static_cast<double>(c_deep) * c * h_at(L + 1) * w_at(L + 1);

    if (cfg.skip_blocks) {
      auto& skip = item("skip_chains");
      const int64_t mid = cfg.skip_mid();
      const int repeat = cfg.stages - L;
      skip.params += conv_params(c, c, 1, true);
      skip.macs += conv_macs(c, c, 1, h, w);
      skip.params += cb_params(c, mid);
      skip.macs += cb_macs(c, mid, h, w);
      for (int i = 0; i < repeat - 2; ++i) {
        skip.params += cb_params(mid, mid);
        skip.macs += cb_macs(mid, mid, h, w);
      }
      skip.params += cb_params(mid, c);
      skip.macs += cb_macs(mid, c, h, w);
    }

    if (cfg.ssa_enabled) {
      auto& ssa = item("ssa");
      const int64_t in_ch =
          cfg.ssa.basis_source == BasisSource::kX1AndX2 ? 2 * c : c;
      ssa.params += cb_params(in_ch, cfg.ssa.k);
      ssa.macs += cb_macs(in_ch, cfg.ssa.k, h, w);
      const double N = static_cast<double>(h) * w;
      const double K = static_cast<double>(cfg.ssa.k);
      const double C = static_cast<double>(c);
      if (cfg.ssa.variant == SsaVariant::kProjection)
        ssa.macs += N * K * K + 2.0 * N * K * C + K * K * K / 6.0 + K * K * C;
      else
        ssa.macs += 2.0 * N * K * C;
    }

    const int64_t fuse_in = cfg.fusion == Fusion::kConcatConv ? 2 * c : c;
    dec.params += cb_params(fuse_in, c);
    dec.macs += cb_macs(fuse_in, c, h, w);
    for (int i = 1; i < cfg.blocks_per_stage; ++i) {
      dec.params += cb_params(c, c);
      dec.macs += cb_macs(c, c, h, w);
    }
  }

  auto& head = item("head");
  head.params += conv_params(cfg.base_channels, cfg.in_channels, 3, true);
  head.macs += conv_macs(cfg.base_channels, cfg.in_channels, 3, height, width);

  for (const char* module : {"encoder", "skip_chains", "ssa", "decoder", "head"}) {
    auto it = items.find(module);
    if (it == items.end()) continue;
    rep.params += it->second.params;
    rep.macs += it->second.macs;
    rep.breakdown.push_back(it->second);
  }
  return rep;
}

}  // namespace nbnet
