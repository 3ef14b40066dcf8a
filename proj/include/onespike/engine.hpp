#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "onespike/snn_kernels.hpp"
#include "onespike/snn_model.hpp"
#include "onespike/tensor.hpp"

namespace onespike {

enum class InputCoding {
  kBinary,       // multi-spike T-bit binary code, base 2
  kSingleSpike,  // one round-off spike per pixel at the first layer's base
};

struct EngineOptions {
  std::optional<int> wait;  // overrides snn.wait
  InputCoding coding = InputCoding::kBinary;
  bool reference_kernels = false;  // serial nested-loop kernels instead of the OpenMP ones
};

struct InferenceResult {
  std::size_t predicted = 0;
  Tensor potentials;                   // output u(T)
  Tensor logits;                       // potentials * snn.output_scale
  LayerActivity input;                 // coded input spikes
  std::vector<LayerActivity> layers;   // one per SNN layer; the output layer has no spikes
};

/// Codes a raw input (divided by snn.input_scale, clipped to 1). Negative values throw.
LayerActivity encode_binary_input(const SnnModel& snn, const Tensor& input);
LayerActivity encode_single_spike_input(const SnnModel& snn, const Tensor& input);

/// One inference. Throws std::logic_error if any hidden neuron fires twice.
InferenceResult infer(const SnnModel& snn, const Tensor& input, const EngineOptions& options = {});
std::size_t infer_single_spike_input(const SnnModel& snn, const Tensor& input);

/// Throws std::logic_error unless every hidden-layer neuron spiked at most once.
void check_single_spike(const InferenceResult& result);

struct LayerTotals {
  SnnKind kind = SnnKind::kDense;
  std::size_t neurons = 0;  // per sample
  std::size_t op_ann = 0;   // per sample
  std::size_t spikes = 0;   // summed over the batch
  std::size_t additions = 0;
};

struct BatchResult {
  std::size_t samples = 0;
  std::vector<std::size_t> predictions;
  std::vector<Tensor> logits;  // filled when keep_logits
  std::size_t input_neurons = 0;
  std::size_t input_spikes = 0;
  std::vector<LayerTotals> layers;
  std::size_t max_spikes_per_hidden_neuron = 0;
};

/// Runs every input; samples are processed in parallel, results ordered by index.
BatchResult evaluate(const SnnModel& snn, std::span<const Tensor> inputs,
                     const EngineOptions& options = {}, bool keep_logits = false);

/// Fraction of predictions equal to labels. Sizes must match and be non-zero.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

}  // namespace onespike
