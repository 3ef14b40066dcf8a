#pragma once

#include <cstddef>

#include "onespike/model.hpp"
#include "onespike/tensor.hpp"

// Dense ANN kernels. `reference` holds the naive nested-loop versions kept for
// testing; `parallel` holds the OpenMP versions used by forward().
namespace onespike::kernels {

namespace reference {
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              std::size_t stride, std::size_t padding);
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor* bias,
              bool split_sign);
Tensor sparse_linear(const Tensor& input, const CsrMatrix& matrix);
}  // namespace reference

namespace parallel {
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor* bias,
              std::size_t stride, std::size_t padding);
Tensor linear(const Tensor& input, const Tensor& weights, const Tensor* bias,
              bool split_sign);
Tensor sparse_linear(const Tensor& input, const CsrMatrix& matrix);
}  // namespace parallel

}  // namespace onespike::kernels
