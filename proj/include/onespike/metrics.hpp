#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onespike/calibration.hpp"
#include "onespike/engine.hpp"
#include "onespike/model.hpp"
#include "onespike/snn_model.hpp"

namespace onespike {

/// Energy per operation in pJ.
struct EnergyModel {
  double e_mac = 4.6;
  double e_add = 0.9;
  std::string label = "FP32";

  static EnergyModel fp32() { return {4.6, 0.9, "FP32"}; }
  static EnergyModel int8() { return {0.2, 0.03, "INT8"}; }
  /// Throws Error(kValidation) unless e_mac > e_add > 0.
  void validate() const;
};

/// MACs per layer of one forward pass: conv out_elems * k*k * C_in/groups,
/// linear rows * in * out, sparse nnz * features. Everything else is 0.
std::vector<std::size_t> op_count_ann(const AnnModel& model);

/// e_mac * sum(op_ann) / (e_add * sum(additions)). Zero additions give +infinity
/// and append a warning when `warnings` is given.
double alpha(std::span<const std::size_t> op_ann, std::span<const std::size_t> additions,
             const EnergyModel& energy, std::vector<std::string>* warnings = nullptr);

/// Pipelined latency in phases: N(T + w) + w(N_L - 1).
std::uint64_t latency(std::uint64_t n_images, std::uint64_t timestep, std::uint64_t wait,
                      std::uint64_t n_layers);

struct LayerReport {
  std::string layer;  // "input" or the SNN layer index
  std::string kind;
  std::size_t op_ann = 0;     // summed over the batch
  std::size_t spikes = 0;     // emitted by this layer over the batch
  std::size_t additions = 0;  // spent by this layer over the batch
  double spike_rate = 0.0;    // spikes per neuron per inference
};

struct RunReport {
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double accuracy = 0.0;
  int timestep = 0;
  int wait = 0;
  double q = 0.0;
  std::vector<LayerReport> layers;
  double alpha_fp32 = 0.0;
  double alpha_int8 = 0.0;
  double alpha_fp32_hidden = 0.0;  // excluding the first layer's input-driven additions
  double alpha_int8_hidden = 0.0;
  std::size_t n_layers = 0;  // N_L
  std::uint64_t latency_total = 0;
  std::vector<std::string> warnings;
};

/// Aggregates a batch run. `acc` is the accuracy already computed against labels.
RunReport make_report(const SnnModel& snn, const BatchResult& batch, double acc, int wait,
                      std::uint64_t seed = 0);

/// Per-layer rows `layer,kind,op_ann,spikes,additions,spike_rate`, then the
/// summary header and row. Lines starting with '#' are comments.
std::string report_csv(const RunReport& report);

/// Fixed-format number used in every CSV.
std::string csv_number(double v);

struct MapeRow {
  double q = 0.0;
  double mape = 0.0;
};
std::vector<MapeRow> sweep_mape(std::span<const double> grid, int timestep, double mu, double sigma,
                                std::size_t intervals = 1'000'000);

struct SweepRow {
  double q = 0.0;
  int wait = 0;
  double mape = 0.0;  // only for Q sweeps
  double accuracy = 0.0;
  double alpha_fp32 = 0.0;
  double alpha_int8 = 0.0;
  std::uint64_t latency_total = 0;
};

/// Rebuilds the SNN for every Q in the grid and evaluates it.
std::vector<SweepRow> sweep_q(const NormalizedAnn& norm, std::span<const double> grid, int timestep,
                              int wait, bool threshold_shift, bool int8,
                              std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                              double mu = 0.0, double sigma = 1.0);

/// Re-runs the same SNN for every wait in the grid.
std::vector<SweepRow> sweep_w(const SnnModel& snn, std::span<const int> grid,
                              std::span<const Tensor> inputs, std::span<const std::size_t> labels);

std::string mape_csv(std::span<const MapeRow> rows, std::uint64_t seed);
std::string sweep_q_csv(std::span<const SweepRow> rows, std::uint64_t seed);
std::string sweep_w_csv(std::span<const SweepRow> rows, std::uint64_t seed);

}  // namespace onespike
