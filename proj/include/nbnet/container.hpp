#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nbnet/common.hpp"
#include "nbnet/tensor.hpp"

namespace nbnet {

// Named-tensor container file, used for checkpoints, masks and exported
// bases. Layout: magic "NBT1", 8-byte little-endian header length, UTF-8
// JSON header listing entries (name, dtype in {f32,f64}, shape, byte
// offset) plus a string metadata map, then the raw little-endian payloads.
class TensorContainer {
 public:
  struct Entry {
    std::string name;
    std::string dtype;  // "f32" or "f64"
    Shape shape;
    std::vector<uint8_t> bytes;
  };

  void put_f32(const std::string& name, const Shape& shape,
               const float* data);
  void put_f64(const std::string& name, const Shape& shape,
               const double* data);
  void set_meta(const std::string& key, const std::string& value);

  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  std::vector<std::string> names() const;  // in insertion order
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  bool has_meta(const std::string& key) const;
  const std::string& meta(const std::string& key) const;
  const std::map<std::string, std::string>& meta_map() const { return meta_; }

  void save(const std::string& path) const;
  static TensorContainer load(const std::string& path);

  template <typename T>
  void put_tensor(const std::string& name, const Tensor<T>& t) {
    if constexpr (sizeof(T) == 4)
      put_f32(name, t.shape(), reinterpret_cast<const float*>(t.data().data()));
    else
      put_f64(name, t.shape(), reinterpret_cast<const double*>(t.data().data()));
  }

  template <typename T>
  Tensor<T> get_tensor(const std::string& name) const {
    const Entry& e = entry(name);
    if constexpr (sizeof(T) == 4) {
      auto v = get_f32(name);
      return Tensor<T>::from_data(e.shape, std::vector<T>(v.begin(), v.end()));
    } else {
      auto v = get_f64(name);
      return Tensor<T>::from_data(e.shape, std::vector<T>(v.begin(), v.end()));
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
  std::map<std::string, std::string> meta_;
};

}  // namespace nbnet
