#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nbnet/common.hpp"

namespace nbnet {

// Dataset description: one record per line, tab separated
// ("clean_path" or "clean_path<TAB>noisy_path"), '#' starts a comment.
// Paths are resolved relative to the manifest's directory unless absolute.
struct DatasetManifest {
  struct Record {
    std::string clean_path;
    std::optional<std::string> noisy_path;
  };

  std::vector<Record> records;
  std::string root;
  bool paired = false;  // every record carries a noisy path

  /// Parses and verifies that every referenced file exists; missing files
  /// raise IoError listing all offending paths.
  static DatasetManifest load(const std::string& path);
};

}  // namespace nbnet
