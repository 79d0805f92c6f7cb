#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "faceqa/tensor.hpp"

namespace faceqa {

/// A trainable tensor with a dot-separated ownership path
/// (e.g. "encoder.lrp.weight").
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of a model's parameters. Names are unique; order is the
/// registration order and is what checkpoints and optimizers iterate over.
class ParameterSet {
 public:
  /// Registers a new zero tensor that requires grad.
  Tensor create(const std::string& name, Shape shape);
  void add(const std::string& name, Tensor tensor);

  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;

  /// Total number of scalar elements over all parameters.
  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> items_;
};

/// Deterministic source of initial weights.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed) {}
  void fill_normal(Tensor& t, double stddev);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace faceqa
