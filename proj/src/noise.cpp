#include "nbnet/noise.hpp"

#include <cmath>

namespace nbnet {

std::string mask_id_name(MaskId id) {
  switch (id) {
    case MaskId::kTrain: return "train";
    case MaskId::kTest1: return "test1";
    case MaskId::kTest2: return "test2";
    case MaskId::kTest3: return "test3";
    default: return "const";
  }
}

NoiseSpec NoiseSpec::parse(const std::string& text, uint64_t seed) {
  NoiseSpec spec;
  spec.seed = seed;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg =
      colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "awgn") {
    spec.kind = NoiseKind::kAwgn;
    if (arg.empty()) throw ConfigError("noise: awgn needs a sigma, e.g. awgn:25");
    spec.sigma = std::stod(arg) / 255.0;
    if (spec.sigma < 0) throw ConfigError("noise: sigma must be non-negative");
    return spec;
  }
  if (kind == "noniid") {
    spec.kind = NoiseKind::kNonIid;
    if (arg == "train") spec.mask_id = MaskId::kTrain;
    else if (arg == "test1") spec.mask_id = MaskId::kTest1;
    else if (arg == "test2") spec.mask_id = MaskId::kTest2;
    else if (arg == "test3") spec.mask_id = MaskId::kTest3;
    else if (arg.rfind("const", 0) == 0) {
      spec.mask_id = MaskId::kConstant;
      if (auto c2 = arg.find(':'); c2 != std::string::npos)
        spec.constant_value = std::stod(arg.substr(c2 + 1)) / 255.0;
    } else {
      throw ConfigError("noise: unknown mask '" + arg +
                        "' (want train|test1|test2|test3|const[:v])");
    }
    return spec;
  }
  throw ConfigError("noise: unknown kind '" + kind + "' (want awgn|noniid)");
}

std::string NoiseSpec::describe() const {
  if (kind == NoiseKind::kAwgn)
    return "awgn:" + std::to_string(sigma * 255.0);
  std::string s = "noniid:" + mask_id_name(mask_id);
  if (mask_id == MaskId::kConstant)
    s += ":" + std::to_string(constant_value * 255.0);
  return s;
}

}  // namespace nbnet
