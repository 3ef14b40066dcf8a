#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onespike/calibration.hpp"
#include "onespike/model.hpp"
#include "onespike/tensor.hpp"

namespace onespike {

/// Coding bases. The external input is always binary coded (q_in = 2).
/// q_hidden holds either one uniform Q or one entry per neuron layer.
struct BaseSchedule {
  double q_in = 2.0;
  std::vector<double> q_hidden{1.3};

  static BaseSchedule uniform(double q) { return {2.0, {q}}; }
  /// Q of the `index`-th neuron layer (max pooling excluded).
  double at(std::size_t index) const;
  void validate(std::size_t neuron_layers) const;
};

enum class SnnKind {
  kConv,     // also average pooling, as a depthwise convolution
  kDense,    // acts on the last axis; optional sign split as in Linear
  kSparse,   // fixed CSR matrix on axis 0
  kMaxPool,  // earliest spike per window
};

std::string_view to_string(SnnKind kind);
std::optional<SnnKind> parse_snn_kind(std::string_view name);

struct QuantInfo {
  int bits = 8;
  double scale = 0.0;
  bool all_zero = false;
};

/// One simulated layer. Thresholds and initial potentials are per output neuron
/// (flat index into out_shape). The decoded output of neuron j is
/// Q_cur^-phase; it fires at phase t once its potential exceeds threshold[j] * Q_cur^-t.
struct SnnLayer {
  SnnKind kind = SnnKind::kDense;
  Shape in_shape;
  Shape out_shape;

  Geometry geometry;       // conv and max pooling
  std::size_t groups = 1;  // conv: in/out channel groups
  Tensor weights;          // conv [O, C/groups, k, k]; dense [out, in]
  bool split_sign = false;
  std::optional<CsrMatrix> sparse;

  std::vector<double> threshold;
  std::vector<double> v_init;
  double q_prev = 2.0;
  double q_cur = 2.0;
  bool fires = true;  // false for the output layer

  /// Residual merge: spikes of an earlier SNN layer (same shape) enter with a
  /// per-channel weight.
  std::optional<std::size_t> skip_source;
  std::vector<double> skip_weight;

  std::optional<QuantInfo> quant;
  std::size_t ann_first = 0;  // ANN layers folded into this layer
  std::size_t ann_last = 0;
  std::size_t op_ann = 0;     // MACs of the source ANN layer

  std::size_t neurons() const { return element_count(out_shape); }
};

struct SnnModel {
  std::string name;
  Shape input_shape;
  std::size_t num_classes = 0;
  int timestep = 16;
  int wait = 16;
  BaseSchedule schedule;
  bool threshold_shift = true;
  double input_scale = 1.0;   // inputs are divided by this before coding
  double output_scale = 1.0;  // output potentials times this approximate ANN logits
  std::vector<SnnLayer> layers;

  /// Checks base chaining, shapes and array lengths.
  void validate() const;
  /// Layers that hold neurons (everything but max pooling).
  std::size_t neuron_layers() const;
};

/// Fuses BatchNorm into thresholds and initial potentials, applies the threshold
/// shift and installs the base schedule. Throws Error(kValidation) on a zero BN
/// gamma, missing stats or an inconsistent base chain.
SnnModel build(const NormalizedAnn& norm, int timestep, int wait, const BaseSchedule& schedule,
               bool threshold_shift = true);

/// Per-tensor symmetric quantization of every weight tensor (scale = max|w| / (2^(bits-1) - 1)),
/// storing dequantized values. All-zero tensors are left unchanged and flagged.
SnnModel quantize_weights(const SnnModel& snn, int bits = 8);

/// Symmetric quantize-dequantize of one array; returns the metadata.
QuantInfo quantize_dequantize(std::vector<double>& values, int bits = 8);

/// Rewrites every GCN layer Linear(W) -> SparseLinear(A) [-> ReLU] into two
/// spike-encodable steps: Linear with sign-split output [XW; -XW] -> ReLU, then
/// SparseLinear([A, -A]) [-> ReLU]. The result computes the same function.
AnnModel plan_gcn(const AnnModel& model);

/// snn.json with arrays in a sibling f64 blob (same stem, .bin).
void save_snn(const SnnModel& snn, const std::filesystem::path& json_path);
SnnModel load_snn(const std::filesystem::path& json_path);

}  // namespace onespike
