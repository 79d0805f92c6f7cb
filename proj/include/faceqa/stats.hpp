#pragma once

#include <span>
#include <vector>

#include "faceqa/errors.hpp"

namespace faceqa {

/// Correlation of a constant vector (or of fewer than two points).
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

/// Fractional ranks starting at 1; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson linear correlation coefficient.
double plcc(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation: Pearson correlation of average ranks.
double srcc(std::span<const double> x, std::span<const double> y);

}  // namespace faceqa
