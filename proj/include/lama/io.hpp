#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lama/maskgen.hpp"
#include "lama/tensor.hpp"

namespace lama {

/// Interleaved 8-bit RGB.
struct Image8 {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;
};

inline std::uint8_t quantize(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

inline Image8 read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw IoError(path + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  Image8 out{img.height, img.width, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(path + ": " + img.message);
  }
  return out;
}

inline void write_png(const std::string& path, const Image8& im) {
  if (im.rgb.size() != im.height * im.width * 3) throw IoError("write_png: buffer size mismatch");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(im.width);
  img.height = png_uint_32(im.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, im.rgb.data(), 0, nullptr))
    throw IoError(path + ": " + img.message);
}

/// Image `b` of a B x 3 x H x W tensor, quantized to 8 bits.
inline Image8 tensor_to_image(const Tensor& t, std::size_t b = 0) {
  if (t.ndim() != 4 || t.dim(1) != 3) throw ShapeError("tensor_to_image: need B x 3 x H x W, got " + shape_str(t.shape()));
  const std::size_t H = t.dim(2), W = t.dim(3);
  Image8 im{H, W, std::vector<std::uint8_t>(H * W * 3)};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) im.rgb[(i * W + j) * 3 + c] = quantize(t.at(b, c, i, j));
  return im;
}

inline Tensor image_to_tensor(const Image8& im) {
  const std::size_t H = im.height, W = im.width;
  std::vector<double> v(3 * H * W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < H * W; ++k) v[c * H * W + k] = im.rgb[k * 3 + c] / 255.0;
  return Tensor({1, 3, H, W}, std::move(v));
}

/// Binary PGM (P5): 255 = known, 0 = missing. Reading treats values >= 128 as known.
inline void write_pgm(const std::string& path, const Mask& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << "P5\n" << m.width << " " << m.height << "\n255\n";
  for (auto k : m.known) f.put(char(k ? 255 : 0));
  if (!f) throw IoError("failed writing " + path);
}

inline Mask read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string rest;
        std::getline(f, rest);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) return t;
      } else {
        t += c;
      }
    }
    return t;
  };
  if (token() != "P5") throw IoError(path + ": not a binary PGM");
  std::size_t W = 0, H = 0, maxval = 0;
  try {
    W = std::stoul(token());
    H = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw IoError(path + ": bad PGM header");
  }
  if (W == 0 || H == 0 || maxval == 0 || maxval > 255) throw IoError(path + ": unsupported PGM header");
  Mask m(H, W);
  std::vector<char> buf(H * W);
  if (!f.read(buf.data(), std::streamsize(buf.size()))) throw IoError(path + ": truncated PGM data");
  for (std::size_t k = 0; k < buf.size(); ++k) m.known[k] = std::uint8_t(buf[k]) * 2 >= maxval + 1 ? 1 : 0;
  return m;
}

}  // namespace lama
