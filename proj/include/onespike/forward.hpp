#pragma once

#include <cstddef>
#include <vector>

#include "onespike/model.hpp"
#include "onespike/tensor.hpp"

namespace onespike {

/// Full-precision reference pass. Returns the output of every layer in order;
/// the last entry holds the logits. Pure and re-entrant.
std::vector<Tensor> forward(const AnnModel& model, const Tensor& input);

/// Logits only.
Tensor predict_logits(const AnnModel& model, const Tensor& input);

/// Index of the largest logit; ties go to the smallest index.
std::size_t argmax_class(const Tensor& logits);

/// Row-wise argmax for rank-2 outputs such as per-node GCN logits.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

/// Output of a single layer given its input (and the skip input for ResidualAdd).
Tensor apply_layer(const Layer& layer, const Tensor& input, const Tensor* skip = nullptr);

}  // namespace onespike
