#include "faceqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace faceqa {

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::span<const Parameter> params, double epsilon, Stencil stencil) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw ConfigError("gradient check epsilon must lie in (0, 1e-3]");
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw NumericalError("loss", "non-finite loss");
  loss.backward();

  GradCheckReport report;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic = t.grad();
    if (!all_finite(analytic)) throw NumericalError(p.name, "non-finite analytic gradient");
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      auto at = [&](double offset) {
        NoGradGuard guard;
        values[i] = original + offset;
        const double v = loss_fn().item();
        values[i] = original;
        if (!std::isfinite(v)) {
          throw NumericalError(p.name, "non-finite loss under perturbation of element " + std::to_string(i));
        }
        return v;
      };
      const double h = epsilon;
      const double numeric =
          stencil == Stencil::two_point
              ? (at(h) - at(-h)) / (2.0 * h)
              : (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++report.elements_checked;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(err, report.max_relative_error);
        report.worst_parameter = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace faceqa
