#include "faceqa/parameters.hpp"

#include <algorithm>

namespace faceqa {

Tensor ParameterSet::create(const std::string& name, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  add(name, t);
  return t;
}

void ParameterSet::add(const std::string& name, Tensor tensor) {
  if (name.empty()) throw ContractError("parameter name must not be empty");
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  tensor.set_requires_grad(true);
  items_.push_back({name, std::move(tensor)});
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& p : items_)
    if (p.name == name) return p.tensor;
  throw ContractError("unknown parameter: " + name);
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

void InitRng::fill_normal(Tensor& t, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.mutable_data()) v = dist(engine_);
}

}  // namespace faceqa
