#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "onespike/phase_codec.hpp"
#include "onespike/snn_model.hpp"
#include "onespike/tensor.hpp"

namespace onespike {

/// Spikes emitted by one layer (or the coded input) for one inference.
struct LayerActivity {
  Shape shape;
  double base = 2.0;                 // phase t is worth base^-t
  std::vector<std::uint64_t> masks;  // per neuron; bit t-1 set = spike at phase t
  std::size_t spikes = 0;            // total spike events
  std::size_t additions = 0;         // synaptic accumulations spent producing it

  std::size_t neurons() const noexcept { return masks.size(); }
  /// Earliest spike of neuron j (the only one for hidden layers).
  SpikeCode code(std::size_t j) const;
  /// Sum of base^-t over the neuron's spikes.
  double decoded(std::size_t j) const;
};

/// Output shape implied by a layer's parameters and in_shape.
Shape expected_output_shape(const SnnLayer& layer);

namespace snn_kernels {

/// Firing decision shared by every kernel. cur[t] (t = 1..T) is the input drive
/// arriving at phase t, already weighted by its phase value. The neuron fires at
/// the smallest t with u(min(t + w, T)) > threshold * qpow[t], where u is the
/// running sum from v_init. horizon is the last phase whose input was consumed.
struct Decision {
  int phase = SpikeCode::kNone;
  int horizon = 0;
  double potential = 0.0;  // u(horizon)
};
Decision decide(const double* cur, double v_init, double threshold, const double* qpow, int T,
                int w, bool fires);

/// Max pooling: earliest spike per window, ties to the smallest index. No additions.
LayerActivity run_maxpool(const SnnLayer& layer, const LayerActivity& input);

// `skip` is the activity of layer.skip_source when present. Output layers fill
// `potentials` with u(T) and emit no spikes.
namespace reference {
LayerActivity run_layer(const SnnLayer& layer, const LayerActivity& input,
                        const LayerActivity* skip, int T, int w,
                        std::vector<double>* potentials = nullptr);
}  // namespace reference

namespace parallel {
LayerActivity run_layer(const SnnLayer& layer, const LayerActivity& input,
                        const LayerActivity* skip, int T, int w,
                        std::vector<double>* potentials = nullptr);
}  // namespace parallel

}  // namespace snn_kernels
}  // namespace onespike
