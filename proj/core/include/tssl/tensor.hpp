// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tssl {

/// Network arithmetic runs in double so finite-difference checks resolve
/// gradients to 1e-3 relative error.
using Real = double;

/// Dense row-major tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, Real fill = 0.0);

  [[nodiscard]] const std::vector<int>& shape() const { return shape_; }
  [[nodiscard]] int dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] Real* ptr() { return data_.data(); }
  [[nodiscard]] const Real* ptr() const { return data_.data(); }
  [[nodiscard]] std::span<Real> data() { return data_; }
  [[nodiscard]] std::span<const Real> data() const { return data_; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  void fill(Real v);
  void reshape(std::vector<int> shape);
  /// Same shape, zero filled.
  [[nodiscard]] Tensor zeros_like() const { return Tensor(shape_); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<Real> data_;
};

std::string shape_string(const std::vector<int>& shape);
std::size_t shape_size(const std::vector<int>& shape);

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Non-trainable state saved in checkpoints (batch-norm running statistics).
struct Buffer {
  std::string name;
  Tensor* tensor = nullptr;
};

}  // namespace tssl
