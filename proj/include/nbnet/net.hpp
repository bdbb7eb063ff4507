#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nbnet/config.hpp"
#include "nbnet/container.hpp"
#include "nbnet/conv_block.hpp"
#include "nbnet/ssa.hpp"

// The denoising network: UNet encoder/decoder with subspace attention on
// every skip connection and a global residual from the noisy input.
// Levels run shallow (0, full resolution) to deep (stages, bottleneck).

namespace nbnet {

template <typename T>
class NbNet {
 public:
  struct EncoderLevel {
    std::vector<ConvBlock<T>> blocks;
    Tensor<T> down_w;  // 4x4 stride-2, channel-preserving, no bias
  };

  // Residual chain on the skip path: c -> mid -> ... -> mid -> c around a
  // 1x1 shortcut. Deeper skips get shorter chains.
  struct SkipChain {
    Tensor<T> sc_w, sc_b;
    std::vector<ConvBlock<T>> blocks;

    Tensor<T> forward(const Tensor<T>& x) const {
      auto h = x;
      for (const auto& b : blocks) h = b.forward(h);
      return add(h, conv2d(x, sc_w, sc_b, 1, 0));
    }
  };

  struct DecoderLevel {
    Tensor<T> up_w, up_b;  // 2x2 stride-2 transposed conv, halves channels
    std::optional<SkipChain> skip;
    std::optional<SsaModule<T>> ssa;
    std::vector<ConvBlock<T>> blocks;  // fusion block first, then extras
  };

  NetworkConfig config;
  std::vector<EncoderLevel> enc;  // size stages+1 (deepest has no down conv)
  std::vector<DecoderLevel> dec;  // size stages, index = level
  Tensor<T> final_w, final_b;     // linear 3x3 head, no activation

  static NbNet build(const NetworkConfig& cfg, uint64_t seed) {
    cfg.validate();
    NbNet net;
    net.config = cfg;
    SequentialRng rng(seed);
    const T slope = static_cast<T>(cfg.leaky_slope);
    const T eps = static_cast<T>(cfg.gram_eps);

    int64_t prev = cfg.in_channels;
    for (int L = 0; L <= cfg.stages; ++L) {
      EncoderLevel lvl;
      const int64_t c = cfg.channels_at(L);
      for (int i = 0; i < cfg.blocks_per_stage; ++i) {
        lvl.blocks.push_back(ConvBlock<T>::init(i == 0 ? prev : c, c, slope, rng));
      }
      if (L < cfg.stages)
        lvl.down_w = he_normal<T>({c, c, 4, 4}, c * 16, rng);
      net.enc.push_back(std::move(lvl));
      prev = c;
    }

    net.dec.resize(cfg.stages);
    for (int L = cfg.stages - 1; L >= 0; --L) {
      DecoderLevel lvl;
      const int64_t c = cfg.channels_at(L);
      const int64_t c_deep = cfg.channels_at(L + 1);
      lvl.up_w = he_normal<T>({c_deep, c, 2, 2}, c_deep * 4, rng);
      lvl.up_b = zero_param<T>({c});
      if (cfg.skip_blocks) {
        SkipChain chain;
        chain.sc_w = he_normal<T>({c, c, 1, 1}, c, rng);
        chain.sc_b = zero_param<T>({c});
        const int64_t mid = cfg.skip_mid();
        const int repeat = cfg.stages - L;  // deepest skip = 1
        chain.blocks.push_back(ConvBlock<T>::init(c, mid, slope, rng));
        for (int i = 0; i < repeat - 2; ++i)
          chain.blocks.push_back(ConvBlock<T>::init(mid, mid, slope, rng));
        chain.blocks.push_back(ConvBlock<T>::init(mid, c, slope, rng));
        lvl.skip = std::move(chain);
      }
      if (cfg.ssa_enabled)
        lvl.ssa = SsaModule<T>::init(c, cfg.ssa, eps, slope, rng);
      const int64_t fuse_in = cfg.fusion == Fusion::kConcatConv ? 2 * c : c;
      lvl.blocks.push_back(ConvBlock<T>::init(fuse_in, c, slope, rng));
      for (int i = 1; i < cfg.blocks_per_stage; ++i)
        lvl.blocks.push_back(ConvBlock<T>::init(c, c, slope, rng));
      net.dec[static_cast<size_t>(L)] = std::move(lvl);
    }

    net.final_w =
        he_normal<T>({cfg.in_channels, cfg.base_channels, 3, 3},
                     cfg.base_channels * 9, rng);
    net.final_b = zero_param<T>({cfg.in_channels});
    return net;
  }

  /// Captured basis maps for one decoder level (used by basis export).
  struct BasisCapture {
    int level = -1;  // which decoder level to capture
    Tensor<T> basis;  // B x (H*W) x K after forward
    int64_t h = 0, w = 0;
  };

  Tensor<T> forward(const Tensor<T>& noisy, BasisCapture* capture = nullptr) const {
    check(noisy.ndim() == 4, "forward: input must be BxCxHxW");
    check(noisy.dim(1) == config.in_channels,
          "forward: expected " + std::to_string(config.in_channels) +
              " channels, got " + std::to_string(noisy.dim(1)));
    const int64_t div = int64_t(1) << config.stages;
    check(noisy.dim(2) % div == 0 && noisy.dim(3) % div == 0,
          "forward: spatial size " + std::to_string(noisy.dim(2)) + "x" +
              std::to_string(noisy.dim(3)) + " must be divisible by 2^stages = " +
              std::to_string(div));

    std::vector<Tensor<T>> bridge(static_cast<size_t>(config.stages));
    Tensor<T> h = noisy;
    for (int L = 0; L <= config.stages; ++L) {
      for (const auto& b : enc[static_cast<size_t>(L)].blocks)
        h = b.forward(h);
      if (L < config.stages) {
        bridge[static_cast<size_t>(L)] = h;
        auto zero_bias = Tensor<T>::zeros({config.channels_at(L)});
        h = conv2d(h, enc[static_cast<size_t>(L)].down_w, zero_bias, 2, 1);
      }
    }

    for (int L = config.stages - 1; L >= 0; --L) {
      const auto& lvl = dec[static_cast<size_t>(L)];
      auto up = conv_transpose2d(h, lvl.up_w, lvl.up_b, 2);
      auto low = bridge[static_cast<size_t>(L)];
      if (lvl.skip) low = lvl.skip->forward(low);

      Tensor<T> x1 = low, x2 = up;
      if (lvl.ssa) {
        auto V = lvl.ssa->generate_basis(low, up);
        if (capture && capture->level == L) {
          capture->basis = V;
          capture->h = low.dim(2);
          capture->w = low.dim(3);
        }
        const Tensor<T>& target =
            lvl.ssa->config.projected_input == ProjectedInput::kX1 ? low : up;
        auto projected = lvl.ssa->config.variant == SsaVariant::kProjection
                             ? project(V, target, lvl.ssa->eps)
                             : dot_product_attention(V, target);
        if (lvl.ssa->config.projected_input == ProjectedInput::kX1)
          x1 = projected;
        else
          x2 = projected;
      }

      h = config.fusion == Fusion::kConcatConv ? concat<T>({x1, x2}, 1)
                                               : add(x1, x2);
      for (const auto& b : lvl.blocks) h = b.forward(h);
    }

    auto residual = conv2d(h, final_w, final_b, 1, 1);
    return add(noisy, residual);
  }

  /// Visits every parameter tensor by reference, in a fixed order (the same
  /// order build() initializes them).
  template <typename F>
  void visit_params(F&& f) {
    for (size_t L = 0; L < enc.size(); ++L) {
      auto prefix = "enc" + std::to_string(L);
      for (size_t i = 0; i < enc[L].blocks.size(); ++i)
        enc[L].blocks[i].visit(prefix + ".block" + std::to_string(i), f);
      if (enc[L].down_w.defined()) f(prefix + ".down.w", enc[L].down_w);
    }
    for (int L = config.stages - 1; L >= 0; --L) {
      auto& lvl = dec[static_cast<size_t>(L)];
      auto prefix = "dec" + std::to_string(L);
      f(prefix + ".up.w", lvl.up_w);
      f(prefix + ".up.b", lvl.up_b);
      if (lvl.skip) {
        f(prefix + ".skip.sc.w", lvl.skip->sc_w);
        f(prefix + ".skip.sc.b", lvl.skip->sc_b);
        for (size_t i = 0; i < lvl.skip->blocks.size(); ++i)
          lvl.skip->blocks[i].visit(prefix + ".skip.block" + std::to_string(i), f);
      }
      if (lvl.ssa) lvl.ssa->visit(prefix + ".ssa", f);
      for (size_t i = 0; i < lvl.blocks.size(); ++i)
        lvl.blocks[i].visit(prefix + ".block" + std::to_string(i), f);
    }
    f("final.w", final_w);
    f("final.b", final_b);
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    visit_params([&](const std::string& name, Tensor<T>& t) {
      out.push_back({name, t});
    });
    return out;
  }

  /// Rebinds parameter tensors in visit order (gradcheck harness support).
  void bind_parameters(const std::vector<Tensor<T>>& tensors) {
    size_t i = 0;
    visit_params([&](const std::string&, Tensor<T>& t) {
      check(i < tensors.size(), "bind_parameters: too few tensors");
      check(tensors[i].shape() == t.shape(),
            "bind_parameters: shape mismatch at index " + std::to_string(i));
      t = tensors[i++];
    });
    check(i == tensors.size(), "bind_parameters: tensor count mismatch");
  }

  int64_t parameter_count() {
    int64_t n = 0;
    for (auto& p : parameters()) n += p.tensor.numel();
    return n;
  }
};

// Parameters plus optimizer state: the checkpointable unit.
template <typename T>
struct TrainState {
  NbNet<T> net;
  std::map<std::string, std::vector<T>> adam_m;
  std::map<std::string, std::vector<T>> adam_v;
  int64_t step = 0;
  uint64_t seed = 0;

  static TrainState build(const NetworkConfig& cfg, uint64_t seed) {
    TrainState s;
    s.net = NbNet<T>::build(cfg, seed);
    s.seed = seed;
    for (auto& p : s.net.parameters()) {
      s.adam_m[p.name].assign(static_cast<size_t>(p.tensor.numel()), T(0));
      s.adam_v[p.name].assign(static_cast<size_t>(p.tensor.numel()), T(0));
    }
    return s;
  }
};

template <typename T>
void save_checkpoint(TrainState<T>& state, const std::string& path) {
  TensorContainer c;
  for (auto& p : state.net.parameters())
    c.put_tensor("param/" + p.name, p.tensor);
  for (auto& [name, m] : state.adam_m) {
    Shape shape{static_cast<int64_t>(m.size())};
    if constexpr (sizeof(T) == 4)
      c.put_f32("adam_m/" + name, shape, reinterpret_cast<const float*>(m.data()));
    else
      c.put_f64("adam_m/" + name, shape, reinterpret_cast<const double*>(m.data()));
  }
  for (auto& [name, v] : state.adam_v) {
    Shape shape{static_cast<int64_t>(v.size())};
    if constexpr (sizeof(T) == 4)
      c.put_f32("adam_v/" + name, shape, reinterpret_cast<const float*>(v.data()));
    else
      c.put_f64("adam_v/" + name, shape, reinterpret_cast<const double*>(v.data()));
  }
  c.set_meta("format", "nbnet-checkpoint-v1");
  c.set_meta("step", std::to_string(state.step));
  c.set_meta("seed", std::to_string(state.seed));
  c.set_meta("net_config", network_config_to_json(state.net.config));
  c.save(path);
}

template <typename T>
TrainState<T> load_checkpoint(const std::string& path) {
  TensorContainer c = TensorContainer::load(path);
  if (!c.has_meta("net_config"))
    throw IoError("checkpoint '" + path + "': missing net_config record");
  NetworkConfig cfg = network_config_from_json(c.meta("net_config"));
  TrainState<T> state = TrainState<T>::build(cfg, 0);
  state.step = c.has_meta("step") ? std::stoll(c.meta("step")) : 0;
  state.seed = c.has_meta("seed") ? std::stoull(c.meta("seed")) : 0;
  // Name lookup keeps old checkpoints readable when new entries appear.
  for (auto& p : state.net.parameters()) {
    const std::string key = "param/" + p.name;
    if (!c.has(key))
      throw IoError("checkpoint '" + path + "': missing parameter " + p.name);
    auto t = c.get_tensor<T>(key);
    check(t.shape() == p.tensor.shape(),
          "checkpoint: shape mismatch for " + p.name);
    std::copy(t.data().begin(), t.data().end(), p.tensor.mutable_data().begin());
    const std::string mkey = "adam_m/" + p.name, vkey = "adam_v/" + p.name;
    if (c.has(mkey)) {
      auto m = c.get_tensor<T>(mkey);
      state.adam_m[p.name].assign(m.data().begin(), m.data().end());
    }
    if (c.has(vkey)) {
      auto v = c.get_tensor<T>(vkey);
      state.adam_v[p.name].assign(v.data().begin(), v.data().end());
    }
  }
  return state;
}

// ---------------------------------------------------------------------------
// analytic cost accounting

struct CostItem {
  std::string module;
  int64_t params = 0;
  double macs = 0.0;
};

struct CostReport {
  int64_t params = 0;
  double macs = 0.0;  // multiply-accumulates for one forward at the given size
  std::vector<CostItem> breakdown;
};

/// Closed-form parameter and MAC counts (convolutions as
/// Cout*Cin*kh*kw*H'*W', the projection as its Gram/solve/reconstruct
/// terms), mirroring the exact build() structure.
CostReport count_params_and_flops(const NetworkConfig& cfg, int64_t height,
                                  int64_t width);

}  // namespace nbnet
