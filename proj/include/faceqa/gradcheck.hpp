#pragma once

#include <functional>
#include <span>
#include <string>

#include "faceqa/parameters.hpp"

namespace faceqa {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t elements_checked = 0;
};

/// Central-difference stencils: (f(x+h) - f(x-h)) / 2h, or the fourth-order
/// five-point rule over x±h and x±2h.
enum class Stencil { two_point, five_point };

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// for every element of every parameter. Relative error per element is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
///
/// `loss_fn` must rebuild the graph from the current parameter values on
/// every call. Throws NumericalError naming the parameter if a perturbed
/// evaluation is not finite, ConfigError if epsilon is outside (0, 1e-3].
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::span<const Parameter> params, double epsilon = 1e-5,
                                Stencil stencil = Stencil::two_point);

}  // namespace faceqa
