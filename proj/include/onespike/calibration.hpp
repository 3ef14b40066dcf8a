#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onespike/model.hpp"
#include "onespike/tensor.hpp"

namespace onespike {

/// Per-layer activation maxima (or percentile-quantiles). Recorded for the output
/// of every layer; values are clamped at zero, except the final layer which
/// records |logit| so the output keeps a positive scale.
struct LayerStats {
  std::size_t layer = 0;
  std::vector<double> channel_max;
  double layer_max = 0.0;
};

struct DeadChannel {
  std::size_t layer = 0;
  std::size_t channel = 0;
};

struct CalibrationStats {
  double percentile = 1.0;
  std::size_t samples = 0;
  double input_max = 0.0;
  std::vector<LayerStats> per_layer;
  /// Spike-feeding channels (ReLU and AvgPool outputs) whose maximum is zero.
  std::vector<DeadChannel> dead_channels;

  const LayerStats& at(std::size_t layer) const;
};

/// Linear-interpolation quantile of `values` at fraction p in [0, 1].
double quantile(std::vector<double> values, double p);

/// One pass over the calibration inputs on the original model. percentile in (0, 1];
/// 1.0 gives the exact maximum. Throws on an empty set.
CalibrationStats collect_stats(const AnnModel& model, std::span<const Tensor> inputs,
                               double percentile = 1.0);

std::string stats_to_json(const CalibrationStats& stats);
CalibrationStats stats_from_json(const std::string& text);
void save_stats(const CalibrationStats& stats, const std::filesystem::path& path);
CalibrationStats load_stats(const std::filesystem::path& path);

enum class NormMode { kChannelWise, kLayerWise, kPassThrough };

/// A group of consecutive layers that becomes one SNN layer:
/// weighted [-> BatchNorm] [-> ResidualAdd] [-> ReLU], or a lone MaxPool/Flatten.
struct Unit {
  std::size_t first = 0;  // Conv2d/Linear/SparseLinear/AvgPool, or MaxPool/Flatten
  std::size_t last = 0;   // layer whose output is the unit's activation
  std::optional<std::size_t> batch_norm;
  std::optional<std::size_t> residual;
  bool has_relu = false;
  bool is_output = false;
  NormMode mode = NormMode::kPassThrough;
};

/// Splits a model into convertible units. Throws Error(kValidation) for layer
/// orders the converter cannot express (e.g. a hidden layer without ReLU).
std::vector<Unit> partition_units(const AnnModel& model);

/// Per-channel scale of an activation tensor (channel convention of channel_of()).
struct ActivationScale {
  Shape shape;
  std::vector<double> per_channel;

  double at_element(std::size_t index) const { return per_channel[channel_of(shape, index)]; }
};

/// The model with weights, biases and BatchNorm shifts rewritten so every unit
/// output equals the original output divided by its calibration maximum.
struct NormalizedAnn {
  AnnModel model;
  CalibrationStats stats;
  std::vector<Unit> units;
  std::vector<NormMode> layer_modes;   // per layer of `model`
  std::vector<ActivationScale> scales; // per unit: divisor applied to its output
  double input_scale = 1.0;            // inputs are fed as x / input_scale
  std::vector<std::string> warnings;

  /// Divisor of the final logits.
  double output_scale() const { return scales.back().per_channel.front(); }
};

NormalizedAnn normalize(const AnnModel& model, const CalibrationStats& stats);

}  // namespace onespike
