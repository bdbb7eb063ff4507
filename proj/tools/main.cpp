// Command-line front end: training, denoising, evaluation, noise synthesis,
// basis export, gradient checking, and preset listing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nbnet/config.hpp"
#include "nbnet/gradcheck_suites.hpp"
#include "nbnet/image_io.hpp"
#include "nbnet/manifest.hpp"
#include "nbnet/net.hpp"
#include "nbnet/noise.hpp"
#include "nbnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nbnet;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), {}};
}

NetworkConfig resolve_net_config(const std::string& arg) {
  if (is_network_preset(arg)) return network_preset(arg);
  if (fs::exists(arg)) return network_config_from_json(read_text_file(arg));
  throw ConfigError("--net '" + arg +
                    "' is neither a preset nor an existing config file");
}

TrainConfig resolve_train_config(const std::string& arg) {
  if (is_train_preset(arg)) return train_preset(arg);
  if (fs::exists(arg)) return train_config_from_json(read_text_file(arg));
  throw ConfigError("--train '" + arg +
                    "' is neither a preset nor an existing config file");
}

std::optional<NoiseSpec> resolve_noise(const std::string& arg, uint64_t seed) {
  if (arg.empty()) return std::nullopt;
  return NoiseSpec::parse(arg, seed);
}

// Every run logs its effective configuration first; the output is enough to
// reproduce the run.
void echo_config(const std::string& subcommand,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "command: " << subcommand << "\n";
  for (const auto& [k, v] : kv) std::cout << "  " << k << ": " << v << "\n";
  std::cout << std::flush;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

int cmd_train(const std::string& net_arg, const std::string& train_arg,
              const std::string& data_arg, const std::string& noise_arg,
              const std::string& val_arg, const std::string& out_dir,
              int64_t seed_override) {
  NetworkConfig ncfg = resolve_net_config(net_arg);
  TrainConfig tcfg = resolve_train_config(train_arg);
  if (seed_override >= 0) tcfg.seed = static_cast<uint64_t>(seed_override);
  auto noise = resolve_noise(noise_arg, tcfg.seed);

  echo_config("train", {{"net", network_config_to_json(ncfg)},
                        {"train", train_config_to_json(tcfg)},
                        {"data", data_arg},
                        {"val_data", val_arg.empty() ? "(none)" : val_arg},
                        {"noise", noise ? noise->describe() : "(paired data)"},
                        {"out", out_dir}});

  auto data = Dataset<float>::from_manifest(DatasetManifest::load(data_arg));
  if (!noise && !data.paired)
    throw ConfigError("train: manifest is not fully paired; give --noise");
  Dataset<float> val;
  if (!val_arg.empty())
    val = Dataset<float>::from_manifest(DatasetManifest::load(val_arg));

  TrainHooks hooks;
  hooks.out_dir = out_dir;
  hooks.on_log = [](const std::string& line) { std::cout << line << "\n"; };
  hooks.on_warn = [](const std::string& w) { std::cerr << "warning: " << w << "\n"; };

  auto result = train(ncfg, tcfg, data, noise, val, hooks);
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason
              << " (last good checkpoint kept in " << out_dir << ")\n";
    return 2;
  }
  std::cout << "checkpoint: " << (fs::path(out_dir) / "ckpt_final.nbt").string()
            << "\n";
  return 0;
}

int cmd_denoise(const std::string& ckpt, const std::string& in_path,
                const std::string& out_path) {
  echo_config("denoise", {{"ckpt", ckpt}, {"in", in_path}, {"out", out_path}});
  auto state = load_checkpoint<float>(ckpt);
  auto img = read_image<float>(in_path);
  NoGradGuard ng;
  auto out = clamp01(state.net.forward(img));
  write_image(out, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_arg,
             const std::string& noise_arg, uint64_t seed,
             const std::string& report_path) {
  auto state = load_checkpoint<float>(ckpt);
  auto noise = resolve_noise(noise_arg, seed);
  echo_config("eval", {{"ckpt", ckpt},
                       {"net", network_config_to_json(state.net.config)},
                       {"data", data_arg},
                       {"noise", noise ? noise->describe() : "(paired data)"},
                       {"seed", std::to_string(seed)}});
  auto data = Dataset<float>::from_manifest(DatasetManifest::load(data_arg));
  if (!noise && !data.paired)
    throw ConfigError("eval: manifest is not fully paired; give --noise");

  auto report = evaluate(state.net, data, noise);
  std::printf("%-28s %10s %8s %12s\n", "image", "psnr_db", "ssim", "noisy_psnr");
  for (const auto& pi : report.per_image)
    std::printf("%-28s %10.4f %8.4f %12.4f\n", pi.name.c_str(), pi.psnr_db,
                pi.ssim, pi.noisy_psnr_db);
  std::printf("%-28s %10.4f %8.4f %12.4f\n", "mean", report.mean_psnr_db,
              report.mean_ssim, report.mean_noisy_psnr_db);

  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw IoError("cannot open report file '" + report_path + "'");
    for (const auto& pi : report.per_image)
      f << pi.name << "\t" << pi.psnr_db << "\t" << pi.ssim << "\n";
    std::cout << "report: " << report_path << "\n";
  }
  return 0;
}

int cmd_synth_noise(const std::string& data_arg, const std::string& noise_arg,
                    const std::string& out_dir, uint64_t seed) {
  auto noise = resolve_noise(noise_arg, seed);
  if (!noise) throw ConfigError("synth-noise: --noise is required");
  echo_config("synth-noise", {{"data", data_arg},
                              {"noise", noise->describe()},
                              {"out_dir", out_dir},
                              {"seed", std::to_string(seed)}});
  auto manifest = DatasetManifest::load(data_arg);
  fs::create_directories(out_dir);
  std::ofstream mf(fs::path(out_dir) / "manifest.tsv");
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    auto clean = read_image<float>(manifest.records[i].clean_path);
    auto noisy = clamp01(apply_noise(clean, *noise, /*stream=*/i + 1));
    const std::string stem = stem_of(manifest.records[i].clean_path);
    const std::string cname = stem + "_clean.ppm";
    const std::string nname = stem + "_noisy.ppm";
    write_image(clean, (fs::path(out_dir) / cname).string());
    write_image(noisy, (fs::path(out_dir) / nname).string());
    mf << cname << "\t" << nname << "\n";
  }
  std::cout << "wrote " << manifest.records.size() << " pairs to " << out_dir
            << "\n";
  return 0;
}

int cmd_export_basis(const std::string& ckpt, const std::string& in_path,
                     int layer, const std::string& out_dir) {
  echo_config("export-basis", {{"ckpt", ckpt},
                               {"in", in_path},
                               {"layer", std::to_string(layer)},
                               {"out_dir", out_dir}});
  auto state = load_checkpoint<float>(ckpt);
  const auto& cfg = state.net.config;
  if (!cfg.ssa_enabled)
    throw ConfigError("export-basis: this checkpoint has no subspace modules");
  if (layer < 0 || layer >= cfg.stages)
    throw ConfigError("export-basis: layer must be in [0, " +
                      std::to_string(cfg.stages - 1) + "]");
  auto img = read_image<float>(in_path);
  img = center_crop_to_multiple(img, int64_t(1) << cfg.stages);

  NoGradGuard ng;
  typename NbNet<float>::BasisCapture capture;
  capture.level = layer;
  auto out = state.net.forward(img, &capture);
  check(capture.basis.defined(), "export-basis: capture failed");

  fs::create_directories(out_dir);
  const int64_t N = capture.basis.dim(1), K = capture.basis.dim(2);
  TensorContainer c;
  c.put_tensor("basis", capture.basis);
  c.set_meta("layer", std::to_string(layer));
  c.set_meta("height", std::to_string(capture.h));
  c.set_meta("width", std::to_string(capture.w));
  c.save((fs::path(out_dir) / "basis.nbt").string());

  for (int64_t k = 0; k < K; ++k) {
    // min-max normalize each basis map for viewing
    float lo = capture.basis.data()[k], hi = lo;
    for (int64_t n = 0; n < N; ++n) {
      const float v = capture.basis.data()[n * K + k];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const float range = hi - lo > 0 ? hi - lo : 1.0f;
    auto map = Tensor<float>::zeros({1, 1, capture.h, capture.w});
    for (int64_t n = 0; n < N; ++n)
      map.mutable_data()[n] = (capture.basis.data()[n * K + k] - lo) / range;
    char name[32];
    std::snprintf(name, sizeof(name), "basis_%02d.pgm", static_cast<int>(k));
    write_image(map, (fs::path(out_dir) / name).string());
  }
  (void)out;
  std::cout << "wrote " << K << " basis maps and basis.nbt to " << out_dir
            << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  echo_config("gradcheck", {{"module", module}});
  auto checks = gradcheck_suite(module);
  bool all_ok = true;
  for (const auto& c : checks) {
    double worst = 0;
    for (const auto& ir : c.report.inputs) worst = std::max(worst, ir.max_rel_error);
    std::printf("%-34s max_rel=%.3e  %s\n", c.name.c_str(), worst,
                c.report.passed ? "PASS" : "FAIL");
    all_ok = all_ok && c.report.passed;
  }
  if (!all_ok) {
    std::cerr << "gradcheck failed\n";
    return 2;
  }
  return 0;
}

int cmd_presets() {
  echo_config("presets", {});
  std::printf("network presets:\n");
  std::printf("  %-22s %10s  %s\n", "name", "params", "notes");
  for (const auto& [name, cfg] : ablation_presets()) {
    auto rep = count_params_and_flops(cfg, 256, 256);
    std::string notes;
    notes += cfg.ssa_enabled ? "ssa(K=" + std::to_string(cfg.ssa.k) + ")" : "no-ssa";
    notes += cfg.skip_blocks ? " skip-chains" : " plain-skips";
    if (cfg.ssa_enabled && cfg.ssa.variant == SsaVariant::kDotProduct)
      notes += " dot-product";
    if (cfg.ssa_enabled && cfg.ssa.projected_input == ProjectedInput::kX2)
      notes += " proj-x2";
    if (cfg.ssa_enabled && cfg.ssa.basis_source == BasisSource::kX1Only)
      notes += " basis-x1";
    if (cfg.ssa_enabled && cfg.ssa.basis_source == BasisSource::kX2Only)
      notes += " basis-x2";
    std::printf("  %-22s %10lld  %s\n", name.c_str(),
                static_cast<long long>(rep.params), notes.c_str());
  }
  std::printf("train presets:\n");
  for (const auto& [name, cfg] : train_presets())
    std::printf("  %-22s iters=%lld batch=%lld patch=%lld lr0=%g seed=%llu\n",
                name.c_str(), static_cast<long long>(cfg.total_iters),
                static_cast<long long>(cfg.batch),
                static_cast<long long>(cfg.patch), cfg.lr0,
                static_cast<unsigned long long>(cfg.seed));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subspace-projection image denoiser"};
  app.require_subcommand(1);

  std::string net_arg = "unet_blocks_ssa", train_arg, data_arg, noise_arg,
              val_arg, out_dir = "train_out", ckpt, in_path, out_path,
              report_path, module_arg = "all";
  int64_t seed_override = -1;
  uint64_t eval_seed = 0;
  int layer = 0;

  auto* train_cmd = app.add_subcommand("train", "train a denoiser");
  train_cmd->add_option("--net", net_arg, "network preset name or config JSON file");
  train_cmd->add_option("--train", train_arg, "train preset name or config JSON file")
      ->required();
  train_cmd->add_option("--data", data_arg, "training manifest")->required();
  train_cmd->add_option("--noise", noise_arg,
                        "noise spec (awgn:25 or noniid:train); omit for paired data");
  train_cmd->add_option("--val-data", val_arg, "validation manifest");
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* denoise_cmd = app.add_subcommand("denoise", "run one image through a checkpoint");
  denoise_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  denoise_cmd->add_option("--in", in_path, "input image (PPM/PGM)")->required();
  denoise_cmd->add_option("--out", out_path, "output image")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_arg, "evaluation manifest")->required();
  eval_cmd->add_option("--noise", noise_arg, "noise spec; omit for paired data");
  eval_cmd->add_option("--seed", eval_seed, "noise seed");
  eval_cmd->add_option("--report", report_path, "write per-image records here");

  auto* synth_cmd = app.add_subcommand("synth-noise", "write noisy/clean pairs");
  synth_cmd->add_option("--data", data_arg, "clean-image manifest")->required();
  synth_cmd->add_option("--noise", noise_arg, "noise spec")->required();
  synth_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  synth_cmd->add_option("--seed", eval_seed, "noise seed");

  auto* export_cmd = app.add_subcommand("export-basis", "dump SSA basis maps");
  export_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  export_cmd->add_option("--in", in_path, "input image")->required();
  export_cmd->add_option("--layer", layer, "decoder level (0 = full resolution)");
  export_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks");
  grad_cmd->add_option("--module", module_arg, "all|core|ssa|nbnet");

  app.add_subcommand("presets", "list named configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(net_arg, train_arg, data_arg, noise_arg, val_arg,
                       out_dir, seed_override);
    if (denoise_cmd->parsed()) return cmd_denoise(ckpt, in_path, out_path);
    if (eval_cmd->parsed())
      return cmd_eval(ckpt, data_arg, noise_arg, eval_seed, report_path);
    if (synth_cmd->parsed())
      return cmd_synth_noise(data_arg, noise_arg, out_dir, eval_seed);
    if (export_cmd->parsed())
      return cmd_export_basis(ckpt, in_path, layer, out_dir);
    if (grad_cmd->parsed()) return cmd_gradcheck(module_arg);
    return cmd_presets();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
