#include "onespike/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "onespike/errors.hpp"

namespace onespike {

std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw validation_error("tensor shape " + shape_string(shape_) + " holds " +
                           std::to_string(element_count(shape_)) + " elements, got " +
                           std::to_string(data_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::size_t channel_count(std::span<const std::size_t> shape) {
  if (shape.empty()) return 1;
  return shape.size() == 3 ? shape[0] : shape.back();
}

std::size_t channel_of(std::span<const std::size_t> shape, std::size_t index) {
  if (shape.empty()) return 0;
  if (shape.size() == 3) return index / (shape[1] * shape[2]);
  return index % shape.back();
}

}  // namespace onespike
