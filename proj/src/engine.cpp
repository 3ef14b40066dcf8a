#include "onespike/engine.hpp"

#include <algorithm>
#include <bit>
#include <stdexcept>

#include "onespike/errors.hpp"
#include "onespike/forward.hpp"
#include "onespike/phase_codec.hpp"

namespace onespike {
namespace {

std::vector<double> scaled_input(const SnnModel& snn, const Tensor& input) {
  if (input.shape() != snn.input_shape)
    throw validation_error("input shape " + shape_string(input.shape()) + " does not match " +
                           shape_string(snn.input_shape));
  std::vector<double> v(input.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(input[i] >= 0.0)) throw validation_error("inputs must be non-negative and finite");
    v[i] = std::min(input[i] / snn.input_scale, 1.0);
  }
  return v;
}

std::size_t first_neuron_layer(const SnnModel& snn) {
  for (std::size_t i = 0; i < snn.layers.size(); ++i)
    if (snn.layers[i].kind != SnnKind::kMaxPool) return i;
  throw validation_error("SNN has no neuron layer");
}

}  // namespace

LayerActivity encode_binary_input(const SnnModel& snn, const Tensor& input) {
  const auto v = scaled_input(snn, input);
  LayerActivity a;
  a.shape = snn.input_shape;
  a.base = 2.0;
  a.masks.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    a.masks[i] = encode_input(v[i], snn.timestep).bits;
    a.spikes += static_cast<std::size_t>(std::popcount(a.masks[i]));
  }
  return a;
}

LayerActivity encode_single_spike_input(const SnnModel& snn, const Tensor& input) {
  const auto v = scaled_input(snn, input);
  const PhaseCodec codec({snn.layers[first_neuron_layer(snn)].q_cur, snn.timestep, Rounding::kRound});
  LayerActivity a;
  a.shape = snn.input_shape;
  a.base = codec.config().base;
  a.masks.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const SpikeCode c = codec.encode_unchecked(v[i]);
    a.masks[i] = c.fired() ? std::uint64_t{1} << (c.phase - 1) : 0;
    a.spikes += c.fired();
  }
  return a;
}

void check_single_spike(const InferenceResult& r) {
  for (std::size_t l = 0; l + 1 < r.layers.size(); ++l)
    for (const std::uint64_t m : r.layers[l].masks)
      if (std::popcount(m) > 1)
        throw std::logic_error("single-spike invariant violated in SNN layer " + std::to_string(l));
}

InferenceResult infer(const SnnModel& snn, const Tensor& input, const EngineOptions& options) {
  const int T = snn.timestep;
  const int w = options.wait.value_or(snn.wait);
  if (w < 0 || w > T) throw validation_error("wait w must lie in [0, T], got " + std::to_string(w));

  InferenceResult r;
  r.input = options.coding == InputCoding::kBinary ? encode_binary_input(snn, input)
                                                   : encode_single_spike_input(snn, input);
  r.layers.reserve(snn.layers.size());
  std::vector<double> potentials;
  for (std::size_t i = 0; i < snn.layers.size(); ++i) {
    const SnnLayer& l = snn.layers[i];
    const LayerActivity& in = i == 0 ? r.input : r.layers[i - 1];
    if (l.kind == SnnKind::kMaxPool) {
      r.layers.push_back(snn_kernels::run_maxpool(l, in));
      continue;
    }
    const LayerActivity* skip = l.skip_source ? &r.layers[*l.skip_source] : nullptr;
    const bool last = i + 1 == snn.layers.size();
    std::vector<double>* pot = last ? &potentials : nullptr;
    r.layers.push_back(options.reference_kernels
                           ? snn_kernels::reference::run_layer(l, in, skip, T, w, pot)
                           : snn_kernels::parallel::run_layer(l, in, skip, T, w, pot));
  }
  check_single_spike(r);

  const Shape& out_shape = snn.layers.back().out_shape;
  r.potentials = Tensor(out_shape, potentials);
  r.logits = r.potentials;
  for (double& v : r.logits.values()) v *= snn.output_scale;
  r.predicted = argmax_class(r.potentials);
  return r;
}

std::size_t infer_single_spike_input(const SnnModel& snn, const Tensor& input) {
  EngineOptions o;
  o.coding = InputCoding::kSingleSpike;
  return infer(snn, input, o).predicted;
}

BatchResult evaluate(const SnnModel& snn, std::span<const Tensor> inputs,
                     const EngineOptions& options, bool keep_logits) {
  if (inputs.empty()) throw validation_error("empty dataset");
  const std::size_t n = inputs.size();
  const std::size_t n_layers = snn.layers.size();
  BatchResult b;
  b.samples = n;
  b.predictions.resize(n);
  if (keep_logits) b.logits.resize(n);
  b.input_neurons = element_count(snn.input_shape);
  b.layers.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    b.layers[l].kind = snn.layers[l].kind;
    b.layers[l].neurons = snn.layers[l].neurons();
    b.layers[l].op_ann = snn.layers[l].op_ann;
  }

  std::vector<std::size_t> spikes(n * n_layers), additions(n * n_layers), input_spikes(n);
  std::vector<std::size_t> max_per_neuron(n, 0);

#pragma omp parallel for schedule(dynamic)
  for (long s = 0; s < static_cast<long>(n); ++s) {
    const auto k = static_cast<std::size_t>(s);
    const InferenceResult r = infer(snn, inputs[k], options);
    b.predictions[k] = r.predicted;
    if (keep_logits) b.logits[k] = r.logits;
    input_spikes[k] = r.input.spikes;
    for (std::size_t l = 0; l < n_layers; ++l) {
      spikes[k * n_layers + l] = r.layers[l].spikes;
      additions[k * n_layers + l] = r.layers[l].additions;
      if (l + 1 < n_layers)
        for (const std::uint64_t m : r.layers[l].masks)
          max_per_neuron[k] = std::max<std::size_t>(max_per_neuron[k], std::popcount(m));
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    b.input_spikes += input_spikes[k];
    b.max_spikes_per_hidden_neuron = std::max(b.max_spikes_per_hidden_neuron, max_per_neuron[k]);
    for (std::size_t l = 0; l < n_layers; ++l) {
      b.layers[l].spikes += spikes[k * n_layers + l];
      b.layers[l].additions += additions[k * n_layers + l];
    }
  }
  return b;
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
  if (predictions.empty()) throw validation_error("empty dataset");
  if (predictions.size() != labels.size())
    throw validation_error(std::to_string(predictions.size()) + " predictions for " +
                           std::to_string(labels.size()) + " labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace onespike
