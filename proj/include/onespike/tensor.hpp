#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace onespike {

using Shape = std::vector<std::size_t>;

std::size_t element_count(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

/// Dense row-major tensor of 64-bit reals. Images are channel-major (C, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Throws Error(kValidation) when the element count does not match the shape.
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Channel count of an activation: axis 0 of rank-3 tensors, last axis otherwise.
std::size_t channel_count(std::span<const std::size_t> shape);
/// Channel of flat element `index` under the same convention.
std::size_t channel_of(std::span<const std::size_t> shape, std::size_t index);

}  // namespace onespike
