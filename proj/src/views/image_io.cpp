#include "faceqa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "faceqa/checkpoint.hpp"

namespace faceqa {

namespace {

bool has_png_signature(const std::string& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0;
}

RgbImage decode_png(const std::string& bytes, const std::string& name) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw DataError("cannot decode PNG " + name + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode PNG " + name + ": " + img.message);
  }
  return out;
}

// Binary netpbm: P6 (RGB) or P5 (grey, expanded to RGB), maxval 255.
RgbImage decode_pnm(const std::string& bytes, const std::string& name) {
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw DataError("unsupported image format: " + name);
  auto next_int = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError("bad netpbm header: " + name);
  in.get();
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w * h) * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError("truncated image: " + name);
  RgbImage out{static_cast<std::size_t>(w), static_cast<std::size_t>(h), {}};
  if (channels == 3) {
    out.pixels = std::move(raw);
  } else {
    out.pixels.resize(raw.size() * 3);
    for (std::size_t i = 0; i < raw.size(); ++i)
      out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = raw[i];
  }
  return out;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (has_png_signature(bytes)) return decode_png(bytes, path.string());
  return decode_pnm(bytes, path.string());
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  const auto bytes = encode_png(image);
  write_file_bytes(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Tensor image_to_tensor(const RgbImage& image) {
  const std::size_t h = image.height, w = image.width;
  std::vector<double> values(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        values[(c * h + y) * w + x] = image.pixels[(y * w + x) * 3 + c] / 255.0;
  return Tensor({3, h, w}, std::move(values));
}

RgbImage tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw DimensionError("expected [3,H,W] tensor");
  const std::size_t h = chw.dim(1), w = chw.dim(2);
  RgbImage out{w, h, std::vector<std::uint8_t>(3 * h * w)};
  auto v = chw.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double s = std::clamp(v[(c * h + y) * w + x], 0.0, 1.0);
        out.pixels[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(s * 255.0));
      }
  return out;
}

Tensor image_to_mask(const RgbImage& image) {
  const std::size_t n = image.width * image.height;
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = image.pixels[3 * i] || image.pixels[3 * i + 1] || image.pixels[3 * i + 2];
    values[i] = on ? 1.0 : 0.0;
  }
  return Tensor({image.height, image.width}, std::move(values));
}

}  // namespace faceqa
