#include "nbnet/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "container serialization assumes a little-endian host");

namespace nbnet {

using ordered_json = nlohmann::ordered_json;

namespace {
constexpr char kMagic[4] = {'N', 'B', 'T', '1'};

size_t dtype_size(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw IoError("container: unknown dtype '" + dtype + "'");
}
}  // namespace

void TensorContainer::put_f32(const std::string& name, const Shape& shape,
                              const float* data) {
  Entry e;
  e.name = name;
  e.dtype = "f32";
  e.shape = shape;
  e.bytes.resize(static_cast<size_t>(numel(shape)) * 4);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second] = std::move(e);
  } else {
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
  }
}

void TensorContainer::put_f64(const std::string& name, const Shape& shape,
                              const double* data) {
  Entry e;
  e.name = name;
  e.dtype = "f64";
  e.shape = shape;
  e.bytes.resize(static_cast<size_t>(numel(shape)) * 8);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second] = std::move(e);
  } else {
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
  }
}

void TensorContainer::set_meta(const std::string& key, const std::string& value) {
  meta_[key] = value;
}

bool TensorContainer::has(const std::string& name) const {
  return index_.count(name) > 0;
}

const TensorContainer::Entry& TensorContainer::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw IoError("container: no entry named '" + name + "'");
  return entries_[it->second];
}

std::vector<std::string> TensorContainer::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<float> TensorContainer::get_f32(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != "f32")
    throw IoError("container: entry '" + name + "' has dtype " + e.dtype +
                  ", expected f32");
  std::vector<float> out(e.bytes.size() / 4);
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

std::vector<double> TensorContainer::get_f64(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != "f64")
    throw IoError("container: entry '" + name + "' has dtype " + e.dtype +
                  ", expected f64");
  std::vector<double> out(e.bytes.size() / 8);
  std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
  return out;
}

bool TensorContainer::has_meta(const std::string& key) const {
  return meta_.count(key) > 0;
}

const std::string& TensorContainer::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw IoError("container: no metadata key '" + key + "'");
  return it->second;
}

void TensorContainer::save(const std::string& path) const {
  ordered_json header;
  header["entries"] = ordered_json::array();
  uint64_t offset = 0;
  for (const auto& e : entries_) {
    ordered_json je;
    je["name"] = e.name;
    je["dtype"] = e.dtype;
    je["shape"] = e.shape;
    je["offset"] = offset;
    header["entries"].push_back(je);
    offset += e.bytes.size();
  }
  header["meta"] = meta_;

  const std::string htext = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("container: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  const uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& e : entries_)
    f.write(reinterpret_cast<const char*>(e.bytes.data()),
            static_cast<std::streamsize>(e.bytes.size()));
  if (!f) throw IoError("container: write failed for '" + path + "'");
}

TensorContainer TensorContainer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("container: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("container: '" + path + "' is not an NBT1 file");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!f) throw IoError("container: truncated header length in '" + path + "'");
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("container: truncated header in '" + path + "'");

  ordered_json header;
  try {
    header = ordered_json::parse(htext);
  } catch (const std::exception& ex) {
    throw IoError("container: bad header JSON in '" + path + "': " + ex.what());
  }

  std::vector<char> payload(std::istreambuf_iterator<char>(f), {});
  TensorContainer c;
  for (const auto& je : header.at("entries")) {
    Entry e;
    e.name = je.at("name").get<std::string>();
    e.dtype = je.at("dtype").get<std::string>();
    e.shape = je.at("shape").get<Shape>();
    const uint64_t off = je.at("offset").get<uint64_t>();
    const size_t nbytes = static_cast<size_t>(numel(e.shape)) * dtype_size(e.dtype);
    if (off + nbytes > payload.size())
      throw IoError("container: entry '" + e.name + "' exceeds payload in '" +
                    path + "'");
    e.bytes.assign(payload.begin() + static_cast<ptrdiff_t>(off),
                   payload.begin() + static_cast<ptrdiff_t>(off + nbytes));
    c.index_[e.name] = c.entries_.size();
    c.entries_.push_back(std::move(e));
  }
  if (header.contains("meta"))
    c.meta_ = header.at("meta").get<std::map<std::string, std::string>>();
  return c;
}

}  // namespace nbnet
