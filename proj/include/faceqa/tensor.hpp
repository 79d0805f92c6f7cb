#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "faceqa/errors.hpp"

namespace faceqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// Recorded operation: knows its inputs and how to push the output gradient
/// back into them.
struct GradNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradNode> grad_fn;

  /// Allocates (zeroed) on demand and returns the gradient buffer.
  std::vector<double>& grad_buffer();
};

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensors are cheap handles: copying a Tensor shares the underlying buffer.
/// Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient values; a zero-filled view if nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Gradients accumulate additively.
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Gradient recording switch, per thread.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. If any input requires grad (and recording is on) the
/// backward closure is attached.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

bool all_finite(std::span<const double> values);

}  // namespace faceqa
