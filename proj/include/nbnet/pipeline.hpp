#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nbnet/image_io.hpp"
#include "nbnet/manifest.hpp"
#include "nbnet/metrics.hpp"
#include "nbnet/net.hpp"
#include "nbnet/noise.hpp"

// Training and evaluation orchestration: patch sampling with dihedral
// augmentation, Adam with cosine annealing, checkpointing, metrics logging.

namespace nbnet {

/// lr0 * (1 + cos(pi * step / total)) / 2, annealed to eta_min.
inline double cosine_lr(int64_t step, int64_t total, double lr0,
                        double eta_min = 0.0) {
  check(step >= 0 && step <= total, "cosine_lr: step outside [0, total]");
  if (total == 0) return lr0;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return eta_min +
         (lr0 - eta_min) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

/// Bias-corrected Adam update over the state's parameters. Gradients must
/// already be populated; a non-finite gradient aborts, naming the parameter.
template <typename T>
void adam_step(TrainState<T>& state, ParamList<T>& params, double lr,
               double beta1, double beta2, double eps) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& p : params) {
    auto& m = state.adam_m[p.name];
    auto& v = state.adam_v[p.name];
    auto w = p.tensor.mutable_data();
    if (!p.tensor.has_grad()) continue;  // provably inactive path
    auto g = p.tensor.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      if (!std::isfinite(gi))
        throw NumericalError("adam: non-finite gradient in parameter '" +
                             p.name + "'");
      m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * gi);
      v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// ---------------------------------------------------------------------------
// data handling

template <typename T>
struct Dataset {
  struct Item {
    std::string name;
    Tensor<T> clean;                  // [1,C,H,W]
    std::optional<Tensor<T>> noisy;   // paired mode
  };
  std::vector<Item> items;
  bool paired = false;

  static Dataset from_manifest(const DatasetManifest& m) {
    Dataset d;
    d.paired = m.paired;
    for (const auto& r : m.records) {
      Item it;
      it.name = std::filesystem::path(r.clean_path).filename().string();
      it.clean = read_image<T>(r.clean_path);
      if (r.noisy_path) it.noisy = read_image<T>(*r.noisy_path);
      d.items.push_back(std::move(it));
    }
    return d;
  }
};

namespace detail {

// In-place dihedral transform of a square C x n x n patch: `rot` quarter
// turns counter-clockwise followed by an optional horizontal flip.
template <typename T>
void dihedral(std::vector<T>& buf, int64_t C, int64_t n, int rot, bool flip) {
  std::vector<T> tmp(buf.size());
  auto src = [&](int64_t c, int64_t i, int64_t j) {
    return buf[(c * n + i) * n + j];
  };
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        int64_t si = i, sj = j;
        switch (rot & 3) {
          case 1: si = j; sj = n - 1 - i; break;
          case 2: si = n - 1 - i; sj = n - 1 - j; break;
          case 3: si = n - 1 - j; sj = i; break;
          default: break;
        }
        if (flip) sj = n - 1 - sj;
        tmp[(c * n + i) * n + j] = src(c, si, sj);
      }
  buf.swap(tmp);
}

}  // namespace detail

template <typename T>
struct Batch {
  Tensor<T> clean;  // [B,C,p,p]
  Tensor<T> noisy;  // defined only for paired datasets
};

/// Uniform random crops with optional rotation/flip augmentation. Source
/// images smaller than the patch are skipped with a one-time warning.
template <typename T>
Batch<T> sample_batch(const Dataset<T>& data, int64_t patch, int64_t batch,
                      bool rotate, bool flip, SequentialRng& rng,
                      const std::function<void(const std::string&)>& warn = {}) {
  check(!data.items.empty(), "sample_batch: empty dataset");
  std::vector<size_t> eligible;
  for (size_t i = 0; i < data.items.size(); ++i) {
    const auto& t = data.items[i].clean;
    if (t.dim(2) >= patch && t.dim(3) >= patch) {
      eligible.push_back(i);
    } else if (warn) {
      warn("image '" + data.items[i].name + "' (" + std::to_string(t.dim(3)) +
           "x" + std::to_string(t.dim(2)) + ") smaller than patch " +
           std::to_string(patch) + "; skipped");
    }
  }
  check(!eligible.empty(), "sample_batch: no image is at least patch-sized");

  const int64_t C = data.items[eligible[0]].clean.dim(1);
  std::vector<T> clean_buf(static_cast<size_t>(batch * C * patch * patch));
  std::vector<T> noisy_buf(data.paired ? clean_buf.size() : 0);

  for (int64_t b = 0; b < batch; ++b) {
    const auto& item =
        data.items[eligible[rng.uniform_int(eligible.size())]];
    const int64_t H = item.clean.dim(2), W = item.clean.dim(3);
    const int64_t top = static_cast<int64_t>(
        rng.uniform_int(static_cast<uint64_t>(H - patch + 1)));
    const int64_t left = static_cast<int64_t>(
        rng.uniform_int(static_cast<uint64_t>(W - patch + 1)));
    const int rot = rotate ? static_cast<int>(rng.uniform_int(4)) : 0;
    const bool fl = flip && rng.uniform_int(2) == 1;

    auto copy_patch = [&](const Tensor<T>& src, std::vector<T>& dst) {
      std::vector<T> tmp(static_cast<size_t>(C * patch * patch));
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < patch; ++i)
          std::copy_n(src.data().data() + ((c * H) + top + i) * W + left, patch,
                      tmp.data() + (c * patch + i) * patch);
      detail::dihedral(tmp, C, patch, rot, fl);
      std::copy(tmp.begin(), tmp.end(),
                dst.begin() + static_cast<size_t>(b * C * patch * patch));
    };
    copy_patch(item.clean, clean_buf);
    if (data.paired) copy_patch(*item.noisy, noisy_buf);
  }

  Batch<T> out;
  out.clean = Tensor<T>::from_data({batch, C, patch, patch}, std::move(clean_buf));
  if (data.paired)
    out.noisy =
        Tensor<T>::from_data({batch, C, patch, patch}, std::move(noisy_buf));
  return out;
}

// ---------------------------------------------------------------------------
// evaluation helpers

template <typename T>
Tensor<T> clamp01(const Tensor<T>& t) {
  auto out = Tensor<T>::zeros(t.shape());
  auto o = out.mutable_data();
  auto d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i)
    o[i] = std::min(T(1), std::max(T(0), d[i]));
  return out;
}

/// Center crop of a [1,C,H,W] image to the nearest multiple of `divisor`.
template <typename T>
Tensor<T> center_crop_to_multiple(const Tensor<T>& t, int64_t divisor) {
  const int64_t H = t.dim(2), W = t.dim(3);
  const int64_t h = (H / divisor) * divisor, w = (W / divisor) * divisor;
  check(h > 0 && w > 0, "image smaller than one downsampling tile (" +
                            std::to_string(divisor) + ")");
  if (h == H && w == W) return t;
  NoGradGuard ng;
  return crop2d(t, (H - h) / 2, (W - w) / 2, h, w);
}

/// Deterministic evaluation: synthetic noise is seeded per image index, the
/// network output is clamped to [0,1] before metrics. The report carries the
/// noisy-input baseline alongside.
template <typename T>
MetricReport evaluate(const NbNet<T>& net, const Dataset<T>& data,
                      const std::optional<NoiseSpec>& noise) {
  check(noise.has_value() || data.paired,
        "evaluate: need either a noise spec or a paired dataset");
  NoGradGuard ng;
  MetricReport report;
  const int64_t div = int64_t(1) << net.config.stages;
  for (size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    auto clean = center_crop_to_multiple(item.clean, div);
    Tensor<T> noisy;
    if (noise) {
      noisy = apply_noise(clean, *noise, /*stream=*/0x45564100ULL + i);
    } else {
      noisy = center_crop_to_multiple(*item.noisy, div);
    }
    auto out = clamp01(net.forward(noisy));
    MetricReport::PerImage pi;
    pi.name = item.name;
    pi.psnr_db = psnr(clean, out);
    pi.ssim = ssim(clean, out);
    pi.noisy_psnr_db = psnr(clean, clamp01(noisy));
    report.per_image.push_back(std::move(pi));
  }
  report.finalize();
  return report;
}

// ---------------------------------------------------------------------------
// training loop

struct TrainHooks {
  std::function<void(const std::string&)> on_log;   // every log line
  std::function<void(const std::string&)> on_warn;  // sampling warnings
  std::string out_dir;  // when set: checkpoints + metrics log land here
};

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<T> loss_curve;  // loss at every step, in execution order
  std::vector<std::string> log_lines;
  bool aborted = false;
  std::string abort_reason;
  double final_val_psnr = 0.0;
  bool has_final_val = false;
};

namespace detail {

inline std::string format_log_line(int64_t step, double lr, double loss,
                                   const MetricReport* val) {
  char buf[256];
  if (val)
    std::snprintf(buf, sizeof(buf),
                  "step=%lld lr=%.10g loss=%.10g val_psnr=%.10g val_ssim=%.10g",
                  static_cast<long long>(step), lr, loss, val->mean_psnr_db,
                  val->mean_ssim);
  else
    std::snprintf(buf, sizeof(buf), "step=%lld lr=%.10g loss=%.10g",
                  static_cast<long long>(step), lr, loss);
  return buf;
}

}  // namespace detail

/// The main loop: sample -> forward -> l1 -> backward -> Adam with cosine
/// annealing. Fresh noise is drawn per iteration unless the config freezes
/// the realization. Periodic validation writes checkpoints; a non-finite
/// loss aborts while keeping the last good checkpoint on disk.
template <typename T>
TrainResult<T> train(const NetworkConfig& ncfg, const TrainConfig& tcfg,
                     const Dataset<T>& train_data,
                     const std::optional<NoiseSpec>& noise,
                     const Dataset<T>& val_data, const TrainHooks& hooks = {}) {
  ncfg.validate();
  tcfg.validate();
  check(noise.has_value() || train_data.paired,
        "train: need either a noise spec or a paired dataset");
  const int64_t div = int64_t(1) << ncfg.stages;
  check(tcfg.patch % div == 0, "train: patch size " + std::to_string(tcfg.patch) +
                                   " must be divisible by 2^stages = " +
                                   std::to_string(div));

  TrainResult<T> result;
  result.state = TrainState<T>::build(ncfg, tcfg.seed);
  auto params = result.state.net.parameters();
  SequentialRng sample_rng(tcfg.seed, /*stream=*/0x5a6d70ULL);

  auto warned = std::make_shared<std::set<std::string>>();
  std::function<void(const std::string&)> warn_once;
  if (hooks.on_warn)
    warn_once = [warned, &hooks](const std::string& msg) {
      if (warned->insert(msg).second) hooks.on_warn(msg);
    };

  namespace fs = std::filesystem;
  std::FILE* log_file = nullptr;
  if (!hooks.out_dir.empty()) {
    fs::create_directories(hooks.out_dir);
    log_file = std::fopen((fs::path(hooks.out_dir) / "metrics.log").string().c_str(), "w");
  }
  auto emit = [&](const std::string& line) {
    result.log_lines.push_back(line);
    if (hooks.on_log) hooks.on_log(line);
    if (log_file) {
      std::fputs(line.c_str(), log_file);
      std::fputc('\n', log_file);
      std::fflush(log_file);
    }
  };
  auto save_ckpt = [&](const std::string& name) {
    if (hooks.out_dir.empty()) return;
    save_checkpoint(result.state, (fs::path(hooks.out_dir) / name).string());
  };

  for (int64_t step = 0; step < tcfg.total_iters; ++step) {
    auto batch = sample_batch(train_data, tcfg.patch, tcfg.batch,
                              tcfg.augment_rotate, tcfg.augment_flip,
                              sample_rng, warn_once);
    Tensor<T> noisy;
    if (noise) {
      const uint64_t stream =
          tcfg.frozen_noise ? 0 : static_cast<uint64_t>(step) + 1;
      noisy = apply_noise(batch.clean, *noise, stream);
    } else {
      noisy = batch.noisy;
    }

    double loss_value = 0.0;
    try {
      for (auto& p : params) p.tensor.zero_grad();
      auto out = result.state.net.forward(noisy);
      auto loss = l1_loss(out, batch.clean);
      loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value))
        throw NumericalError("loss is not finite");
      backward(loss);
    } catch (const NumericalError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      emit("abort step=" + std::to_string(step) + " reason=" + e.what());
      break;
    }

    if (tcfg.grad_clip > 0) {
      double norm2 = 0;
      for (auto& p : params)
        if (p.tensor.has_grad())
          for (T g : p.tensor.grad()) norm2 += static_cast<double>(g) * g;
      const double norm = std::sqrt(norm2);
      if (norm > tcfg.grad_clip) {
        const T s = static_cast<T>(tcfg.grad_clip / norm);
        for (auto& p : params)
          if (p.tensor.has_grad()) {
            auto buf = p.tensor.impl()->grad_buffer();
            for (auto& g : buf) g *= s;
          }
      }
    }

    const double lr = cosine_lr(step, tcfg.total_iters, tcfg.lr0, tcfg.eta_min);
    try {
      adam_step(result.state, params, lr, tcfg.beta1, tcfg.beta2, tcfg.eps_adam);
    } catch (const NumericalError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      emit("abort step=" + std::to_string(step) + " reason=" + e.what());
      break;
    }
    result.loss_curve.push_back(static_cast<T>(loss_value));

    const bool do_val = tcfg.eval_every > 0 && !val_data.items.empty() &&
                        ((step + 1) % tcfg.eval_every == 0 ||
                         step + 1 == tcfg.total_iters);
    const bool do_log = tcfg.log_every > 0 &&
                        (step % tcfg.log_every == 0 ||
                         step + 1 == tcfg.total_iters);
    if (do_val) {
      auto val = evaluate(result.state.net, val_data, noise);
      result.final_val_psnr = val.mean_psnr_db;
      result.has_final_val = true;
      emit(detail::format_log_line(step + 1, lr, loss_value, &val));
      save_ckpt("ckpt_last.nbt");
    } else if (do_log) {
      emit(detail::format_log_line(step + 1, lr, loss_value, nullptr));
    }
  }

  if (!result.aborted) save_ckpt("ckpt_final.nbt");
  if (log_file) std::fclose(log_file);
  return result;
}

}  // namespace nbnet
