#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbnet/common.hpp"
#include "nbnet/ssa.hpp"

namespace nbnet {

enum class Fusion { kConcatConv, kAdd };

// Full architectural description. Channel width at level L is
// base_channels * 2^L; there are `stages` downsamplings, so inputs must be
// divisible by 2^stages and the bottleneck sits at base_channels * 2^stages.
struct NetworkConfig {
  int stages = 4;
  int64_t base_channels = 32;
  int blocks_per_stage = 1;
  int64_t in_channels = 3;
  bool ssa_enabled = true;
  SsaConfig ssa;  // ssa.k is the subspace dimension K
  bool skip_blocks = true;
  int64_t skip_mid_channels = 0;  // 0 = 4 * base_channels
  Fusion fusion = Fusion::kConcatConv;
  double leaky_slope = 0.2;
  double gram_eps = 1e-4;

  int64_t k() const { return ssa.k; }
  int64_t channels_at(int level) const { return base_channels << level; }
  int64_t skip_mid() const {
    return skip_mid_channels > 0 ? skip_mid_channels : 4 * base_channels;
  }

  /// Rejects impossible widths, and K outside [1, base_channels); training
  /// with K equal to the first-stage width does not converge, so it is a
  /// configuration error rather than a runtime surprise.
  void validate() const {
    check(stages >= 1, "config: stages must be >= 1");
    check(base_channels >= 1, "config: base_channels must be >= 1");
    check(blocks_per_stage >= 1, "config: blocks_per_stage must be >= 1");
    check(in_channels == 1 || in_channels == 3,
          "config: in_channels must be 1 or 3");
    if (ssa_enabled)
      check(ssa.k >= 1 && ssa.k < base_channels,
            "config: K must satisfy 1 <= K < base_channels, got K=" +
                std::to_string(ssa.k) + " with base_channels=" +
                std::to_string(base_channels));
  }
};

// Optimization settings for the training loop.
struct TrainConfig {
  double lr0 = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int64_t total_iters = 700000;
  int64_t batch = 32;
  int64_t patch = 128;
  uint64_t seed = 0;
  int64_t eval_every = 0;  // 0 = no periodic validation
  int64_t log_every = 100;
  bool augment_rotate = true;
  bool augment_flip = true;
  double grad_clip = 0.0;  // max-norm rescue flag; 0 = off
  bool frozen_noise = false;  // reuse one noise realization every batch
  double eta_min = 0.0;       // cosine annealing floor

  void validate() const {
    check(lr0 > 0, "train config: lr0 must be positive");
    check(batch >= 1, "train config: batch must be >= 1");
    check(patch >= 1, "train config: patch must be >= 1");
    check(total_iters >= 0, "train config: total_iters must be >= 0");
  }
};

// JSON round-trip for config records (checkpoints, CLI --net/--train files).
std::string network_config_to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

/// The named architecture table: the module comparison set, the K sweep, the
/// dot-product variant, the Proj(a,b) combinations, and the desk-scale nets.
std::vector<std::pair<std::string, NetworkConfig>> ablation_presets();

/// nullptr-free lookup; throws ConfigError for unknown names.
NetworkConfig network_preset(const std::string& name);
bool is_network_preset(const std::string& name);

/// Desk-scale training presets ("overfit1", "tiny_awgn", ...).
std::vector<std::pair<std::string, TrainConfig>> train_presets();
TrainConfig train_preset(const std::string& name);
bool is_train_preset(const std::string& name);

}  // namespace nbnet
