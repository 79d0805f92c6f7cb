#include <cmath>

#include "faceqa/harness.hpp"

namespace faceqa {

void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& config) {
  const auto& items = params.items();
  if (state.m.empty()) {
    for (const auto& p : items) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != items.size()) throw ContractError("Adam state does not match the parameter set");

  std::vector<std::vector<double>> grads;
  grads.reserve(items.size());
  for (const auto& p : items) {
    grads.push_back(p.tensor.grad());
    if (!all_finite(grads.back())) throw NumericalError(p.name, "non-finite gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor tensor = items[i].tensor;
    auto w = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      w[k] -= config.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.epsilon);
    }
  }
}

}  // namespace faceqa
