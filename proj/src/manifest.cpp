#include "nbnet/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace nbnet {

namespace fs = std::filesystem;

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("manifest: cannot open '" + path + "'");
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();

  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (fs::path(m.root) / fp).string();
  };

  std::string line;
  size_t lineno = 0;
  bool all_paired = true;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                             line.back() == '\t'))
      line.pop_back();
    if (line.empty()) continue;
    Record r;
    if (auto tab = line.find('\t'); tab != std::string::npos) {
      r.clean_path = resolve(line.substr(0, tab));
      r.noisy_path = resolve(line.substr(tab + 1));
    } else {
      r.clean_path = resolve(line);
      all_paired = false;
    }
    m.records.push_back(std::move(r));
  }
  if (m.records.empty())
    throw IoError("manifest: '" + path + "' lists no records");
  m.paired = all_paired;

  std::string missing;
  for (const auto& r : m.records) {
    if (!fs::exists(r.clean_path)) missing += "\n  " + r.clean_path;
    if (r.noisy_path && !fs::exists(*r.noisy_path)) missing += "\n  " + *r.noisy_path;
  }
  if (!missing.empty())
    throw IoError("manifest: missing files:" + missing);
  return m;
}

}  // namespace nbnet
