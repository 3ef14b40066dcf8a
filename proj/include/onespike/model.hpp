#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onespike/tensor.hpp"

namespace onespike {

enum class LayerKind {
  kConv2d,
  kLinear,
  kSparseLinear,
  kBatchNorm,
  kReLU,
  kMaxPool,
  kAvgPool,
  kResidualAdd,
  kFlatten,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

/// Square kernels only. For pooling, stride defaults to the kernel size.
struct Geometry {
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;  // used as-is under the square root; no epsilon

  std::size_t channels() const noexcept { return gamma.size(); }
  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

/// Fixed compressed-row matrix. Applied along axis 0 of its input.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return values.size(); }
  static CsrMatrix from_dense(std::size_t rows, std::size_t cols,
                              const std::vector<double>& dense);
  std::vector<double> to_dense() const;
  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;
};

/// One node of the layer graph. Which optional members are present depends on
/// `kind`; validate() enforces the combination.
///
///   Conv2d       weights [O, C, k, k], optional bias [O]
///   Linear       weights [out, in], optional bias [out]; acts on the last axis.
///                With split_sign the output is [z; -z] stacked along axis 0.
///   SparseLinear sparse [rows, cols]; acts on axis 0 ([cols, F] -> [rows, F]).
///                split_sign marks a matrix of the form [A, -A] built by plan_gcn.
///   BatchNorm    bn over the channel axis
///   AvgPool      optional weights [C]: per-channel output multiplier
///   ResidualAdd  optional weights [C]: per-channel multiplier on the skip input
struct Layer {
  LayerKind kind = LayerKind::kReLU;
  std::optional<Tensor> weights;
  std::optional<Tensor> bias;
  std::optional<BatchNormParams> bn;
  Geometry geometry;
  std::optional<CsrMatrix> sparse;
  bool split_sign = false;

  static Layer conv2d(Tensor weights, std::optional<Tensor> bias, std::size_t stride = 1,
                      std::size_t padding = 0);
  static Layer linear(Tensor weights, std::optional<Tensor> bias);
  static Layer sparse_linear(CsrMatrix matrix);
  static Layer batch_norm(BatchNormParams params);
  static Layer relu();
  static Layer max_pool(std::size_t kernel, std::size_t stride = 0);
  static Layer avg_pool(std::size_t kernel, std::size_t stride = 0);
  static Layer residual_add();
  static Layer flatten();
};

struct SkipEdge {
  std::size_t source = 0;  // layer whose output is added
  std::size_t merge = 0;   // the ResidualAdd layer

  friend bool operator==(const SkipEdge&, const SkipEdge&) = default;
};

struct AnnModel {
  std::string name;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::vector<Layer> layers;
  std::vector<SkipEdge> skip_edges;

  /// Skip source feeding the ResidualAdd at `merge`, if any.
  std::optional<std::size_t> skip_source(std::size_t merge) const;
};

/// Output shape of every layer. Throws Error(kFormat) naming the first layer
/// whose parameters do not fit its input.
std::vector<Shape> infer_shapes(const AnnModel& model);

/// Checks every structural invariant (field presence per kind, shapes, finiteness,
/// positive variances, ReLU placement, skip edges, no trailing ReLU).
void validate(const AnnModel& model);

}  // namespace onespike
