#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbnet/common.hpp"
#include "nbnet/tensor.hpp"

namespace nbnet {

/// Decoded 8-bit image, interleaved row-major (as stored in the file).
struct ImageU8 {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 0;  // 3 for P6, 1 for P5
  std::vector<uint8_t> pixels;
};

/// Parses binary PPM (P6) or PGM (P5) with maxval 255. Malformed input
/// raises IoError carrying the byte offset of the problem.
ImageU8 read_image_u8(const std::string& path);

/// Canonical-header writer ("P6\n<w> <h>\n255\n" + payload).
void write_image_u8(const ImageU8& img, const std::string& path);

/// 8-bit image to a [1,C,H,W] tensor with values v/255 in [0,1].
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Shape shape{1, img.channels, img.height, img.width};
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  const int64_t hw = img.height * img.width;
  for (int64_t p = 0; p < hw; ++p)
    for (int64_t c = 0; c < img.channels; ++c)
      data[static_cast<size_t>(c * hw + p)] =
          static_cast<T>(img.pixels[static_cast<size_t>(p * img.channels + c)]) /
          T(255);
  return Tensor<T>::from_data(std::move(shape), std::move(data));
}

/// [1,C,H,W] or [C,H,W] tensor in [0,1] to an 8-bit image using
/// round-half-to-even quantization. Values outside [0,1] are an error unless
/// `clamp` is set.
template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t, bool clamp = false);

template <typename T>
Tensor<T> read_image(const std::string& path) {
  return image_to_tensor<T>(read_image_u8(path));
}

template <typename T>
void write_image(const Tensor<T>& t, const std::string& path, bool clamp = false) {
  write_image_u8(tensor_to_image(t, clamp), path);
}

/// Round-half-to-even quantization of one [0,1] sample to 8 bits.
uint8_t quantize_u8(double v);

extern template ImageU8 tensor_to_image<float>(const Tensor<float>&, bool);
extern template ImageU8 tensor_to_image<double>(const Tensor<double>&, bool);

}  // namespace nbnet
