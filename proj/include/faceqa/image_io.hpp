#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "faceqa/tensor.hpp"

namespace faceqa {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

/// Reads PNG (any bit depth/colour type, converted to 8-bit RGB) or binary
/// PPM/PGM (P6/P5) based on file contents.
RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// PNG bytes in memory (used by the rating service).
std::vector<std::uint8_t> encode_png(const RgbImage& image);

/// [3,H,W] tensor with values in [0,1].
Tensor image_to_tensor(const RgbImage& image);
/// Inverse of image_to_tensor; values are clamped and rounded.
RgbImage tensor_to_image(const Tensor& chw);
/// [H,W] binary mask: any non-zero channel counts as foreground.
Tensor image_to_mask(const RgbImage& image);

}  // namespace faceqa
