#include "nbnet/image_io.hpp"

#include <cfenv>
#include <cmath>
#include <fstream>

namespace nbnet {

namespace {

struct Reader {
  std::vector<char> bytes;
  size_t pos = 0;
  std::string path;

  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError("image '" + path + "': " + msg + " (byte offset " +
                  std::to_string(pos) + ")");
  }

  int peek() const {
    return pos < bytes.size() ? static_cast<unsigned char>(bytes[pos]) : -1;
  }
  int get() {
    if (pos >= bytes.size()) fail("unexpected end of file");
    return static_cast<unsigned char>(bytes[pos++]);
  }

  // PNM token scanner: whitespace separates tokens, '#' starts a comment
  // running to end of line.
  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      const int c = peek();
      if (c == '#') {
        while (pos < bytes.size() && get() != '\n') {
        }
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int64_t read_int() {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(peek()))
      fail("expected an integer header field");
    int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(peek())) {
      v = v * 10 + (get() - '0');
      if (v > 1'000'000'000) fail("header field out of range");
    }
    return v;
  }
};

}  // namespace

ImageU8 read_image_u8(const std::string& path) {
  Reader r;
  r.path = path;
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("image '" + path + "': cannot open file");
    r.bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  if (r.bytes.size() < 2) r.fail("not a PNM file");
  const char m0 = static_cast<char>(r.get());
  const char m1 = static_cast<char>(r.get());
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    r.fail("unsupported magic (want P5 or P6)");
  ImageU8 img;
  img.channels = (m1 == '6') ? 3 : 1;
  img.width = r.read_int();
  img.height = r.read_int();
  const int64_t maxval = r.read_int();
  if (maxval != 255)
    r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (img.width <= 0 || img.height <= 0) r.fail("empty image");
  // Exactly one whitespace byte separates the header from the payload.
  const int sep = r.get();
  if (!std::isspace(sep)) r.fail("missing whitespace before payload");
  const size_t need =
      static_cast<size_t>(img.width * img.height * img.channels);
  if (r.bytes.size() - r.pos < need)
    r.fail("truncated payload: need " + std::to_string(need) + " bytes, have " +
           std::to_string(r.bytes.size() - r.pos));
  img.pixels.assign(r.bytes.begin() + static_cast<ptrdiff_t>(r.pos),
                    r.bytes.begin() + static_cast<ptrdiff_t>(r.pos + need));
  return img;
}

void write_image_u8(const ImageU8& img, const std::string& path) {
  check(img.channels == 1 || img.channels == 3,
        "write_image: only 1- or 3-channel images supported");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("image '" + path + "': cannot open for writing");
  f << (img.channels == 3 ? "P6" : "P5") << "\n"
    << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("image '" + path + "': write failed");
}

uint8_t quantize_u8(double v) {
  // nearbyint under the default FE_TONEAREST mode rounds half to even.
  const double r = std::nearbyint(v * 255.0);
  return static_cast<uint8_t>(std::min(255.0, std::max(0.0, r)));
}

template <typename T>
ImageU8 tensor_to_image(const Tensor<T>& t, bool clamp) {
  Shape s = t.shape();
  if (s.size() == 4) {
    check(s[0] == 1, "tensor_to_image: batch must be 1");
    s.erase(s.begin());
  }
  check(s.size() == 3, "tensor_to_image: expected [1,C,H,W] or [C,H,W]");
  const int64_t C = s[0], H = s[1], W = s[2];
  check(C == 1 || C == 3, "tensor_to_image: need 1 or 3 channels");
  ImageU8 img;
  img.width = W;
  img.height = H;
  img.channels = C;
  img.pixels.resize(static_cast<size_t>(C * H * W));
  auto d = t.data();
  const int64_t hw = H * W;
  for (int64_t p = 0; p < hw; ++p)
    for (int64_t c = 0; c < C; ++c) {
      double v = static_cast<double>(d[c * hw + p]);
      if (v < 0.0 || v > 1.0) {
        if (!clamp)
          throw ConfigError(
              "tensor_to_image: value " + std::to_string(v) +
              " outside [0,1]; clamp not requested");
        v = std::min(1.0, std::max(0.0, v));
      }
      img.pixels[static_cast<size_t>(p * C + c)] = quantize_u8(v);
    }
  return img;
}

template ImageU8 tensor_to_image<float>(const Tensor<float>&, bool);
template ImageU8 tensor_to_image<double>(const Tensor<double>&, bool);

}  // namespace nbnet
