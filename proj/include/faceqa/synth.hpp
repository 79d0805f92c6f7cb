#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "faceqa/dimensions.hpp"
#include "faceqa/manifest.hpp"
#include "faceqa/views.hpp"

namespace faceqa {

/// Corruption magnitudes, each in [0, 1] (0 = pristine).
struct Corruption {
  double noise = 0.0;         // additive Gaussian noise
  double blur = 0.0;          // Gaussian blur
  double desaturation = 0.0;  // blend towards luminance
  double contrast = 0.0;      // compression towards the mean
  double swap = 0.0;          // patch swaps inside the face ("hallucination")
};

struct SynthOptions {
  std::size_t size = 64;
  double texture_amplitude = 0.12;
  double max_noise_std = 0.2;
  double max_blur_sigma = 2.0;
  double max_contrast_compression = 0.8;
  std::size_t max_swaps = 6;
  // Corruptions drawn at random, in Corruption field order; the rest stay 0.
  std::array<bool, 5> graded{true, true, true, true, true};
};

struct SynthSample {
  ImageRecord record;
  Corruption corruption;
  DimensionScores labels{};
};

/// Per-dimension label 5 - 4 m of its corruption; overall is a fixed
/// positive blend of the five. Strictly decreasing in every magnitude.
DimensionScores labels_from_corruption(const Corruption& c);

/// Face-like frame with eyes and mouth, a textured background, a face box and
/// an eyes-and-mouth mask, degraded by `c`. Deterministic in (seed, index).
SynthSample render_synthetic(std::uint64_t seed, std::size_t index, const Corruption& c,
                             const SynthOptions& options = {});

/// Magnitudes drawn uniformly and independently per image.
std::vector<SynthSample> make_synthetic_set(std::uint64_t seed, std::size_t count, const SynthOptions& options = {});

/// Writes <dir>/images/<id>.png, <dir>/masks/<id>.png and <dir>/manifest.jsonl.
void write_synthetic_set(const std::filesystem::path& dir, const std::vector<SynthSample>& samples);

/// View options that fit synthetic frames to a model input size.
ViewOptions synthetic_view_options(std::size_t input_size);

}  // namespace faceqa
