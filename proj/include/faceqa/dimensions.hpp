#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace faceqa {

inline constexpr std::size_t kNumDimensions = 6;

/// Fixed task order used by labels, task tokens and regression heads.
inline constexpr std::array<std::string_view, kNumDimensions> kDimensionNames = {
    "noise", "sharpness", "colorfulness", "contrast", "fidelity", "overall"};

inline constexpr std::size_t kOverall = 5;

/// One value per quality dimension, in kDimensionNames order.
using DimensionScores = std::array<double, kNumDimensions>;

}  // namespace faceqa
