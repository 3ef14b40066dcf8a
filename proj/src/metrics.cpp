#include "onespike/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "onespike/errors.hpp"
#include "onespike/phase_codec.hpp"

namespace onespike {

void EnergyModel::validate() const {
  if (!(e_mac > e_add && e_add > 0.0))
    throw validation_error("energy model needs e_mac > e_add > 0");
}

std::vector<std::size_t> op_count_ann(const AnnModel& model) {
  const auto shapes = infer_shapes(model);
  std::vector<std::size_t> ops(model.layers.size(), 0);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    const Shape& in = i == 0 ? model.input_shape : shapes[i - 1];
    switch (l.kind) {
      case LayerKind::kConv2d: {
        const Shape& w = l.weights->shape();
        ops[i] = element_count(shapes[i]) * w[1] * w[2] * w[3];
        break;
      }
      case LayerKind::kLinear: {
        const std::size_t rows = in.size() == 1 ? 1 : in[0];
        ops[i] = rows * l.weights->dim(0) * l.weights->dim(1);
        break;
      }
      case LayerKind::kSparseLinear: {
        const std::size_t features = in.size() == 1 ? 1 : in[1];
        const std::size_t nnz = l.split_sign ? l.sparse->nnz() / 2 : l.sparse->nnz();
        ops[i] = nnz * features;
        break;
      }
      default:
        break;
    }
  }
  return ops;
}

double alpha(std::span<const std::size_t> op_ann, std::span<const std::size_t> additions,
             const EnergyModel& energy, std::vector<std::string>* warnings) {
  energy.validate();
  const double ops = static_cast<double>(std::accumulate(op_ann.begin(), op_ann.end(), std::size_t{0}));
  const double adds =
      static_cast<double>(std::accumulate(additions.begin(), additions.end(), std::size_t{0}));
  if (adds == 0.0) {
    if (warnings) warnings->push_back("no additions were performed; alpha is infinite");
    return std::numeric_limits<double>::infinity();
  }
  return energy.e_mac * ops / (energy.e_add * adds);
}

std::uint64_t latency(std::uint64_t n_images, std::uint64_t timestep, std::uint64_t wait,
                      std::uint64_t n_layers) {
  if (n_images < 1 || timestep < 1 || n_layers < 1)
    throw validation_error("latency needs N_image, T and N_L of at least 1");
  return n_images * (timestep + wait) + wait * (n_layers - 1);
}

RunReport make_report(const SnnModel& snn, const BatchResult& batch, double acc, int wait,
                      std::uint64_t seed) {
  RunReport r;
  r.seed = seed;
  r.samples = batch.samples;
  r.accuracy = acc;
  r.timestep = snn.timestep;
  r.wait = wait;
  r.q = snn.schedule.at(0);
  r.n_layers = snn.neuron_layers();
  const auto n = static_cast<double>(batch.samples);

  LayerReport in;
  in.layer = "input";
  in.kind = "Input";
  in.spikes = batch.input_spikes;
  in.spike_rate = static_cast<double>(batch.input_spikes) / (static_cast<double>(batch.input_neurons) * n);
  r.layers.push_back(in);

  std::vector<std::size_t> ops, adds;
  std::size_t first_neuron = snn.layers.size();
  for (std::size_t l = 0; l < batch.layers.size(); ++l) {
    const LayerTotals& t = batch.layers[l];
    if (t.kind != SnnKind::kMaxPool && first_neuron == snn.layers.size()) first_neuron = l;
    LayerReport row;
    row.layer = std::to_string(l);
    row.kind = std::string(to_string(t.kind));
    row.op_ann = t.op_ann * batch.samples;
    row.spikes = t.spikes;
    row.additions = t.additions;
    row.spike_rate = static_cast<double>(t.spikes) / (static_cast<double>(t.neurons) * n);
    r.layers.push_back(row);
    ops.push_back(row.op_ann);
    adds.push_back(row.additions);
  }
  r.alpha_fp32 = alpha(ops, adds, EnergyModel::fp32(), &r.warnings);
  r.alpha_int8 = alpha(ops, adds, EnergyModel::int8());
  std::vector<std::size_t> hidden_ops = ops, hidden_adds = adds;
  if (first_neuron < ops.size()) hidden_ops[first_neuron] = hidden_adds[first_neuron] = 0;
  r.alpha_fp32_hidden = alpha(hidden_ops, hidden_adds, EnergyModel::fp32());
  r.alpha_int8_hidden = alpha(hidden_ops, hidden_adds, EnergyModel::int8());
  r.latency_total = latency(batch.samples, static_cast<std::uint64_t>(snn.timestep),
                            static_cast<std::uint64_t>(wait), r.n_layers);
  return r;
}

std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string report_csv(const RunReport& r) {
  std::ostringstream os;
  os << "# seed=" << r.seed << "\n";
  for (const auto& w : r.warnings) os << "# warning: " << w << "\n";
  os << "layer,kind,op_ann,spikes,additions,spike_rate\n";
  for (const auto& l : r.layers)
    os << l.layer << ',' << l.kind << ',' << l.op_ann << ',' << l.spikes << ',' << l.additions << ','
       << csv_number(l.spike_rate) << "\n";
  os << "alpha_fp32,alpha_int8,accuracy,T,w,Q,latency_total,alpha_fp32_hidden,alpha_int8_hidden,"
        "N_L,samples\n";
  os << csv_number(r.alpha_fp32) << ',' << csv_number(r.alpha_int8) << ',' << csv_number(r.accuracy)
     << ',' << r.timestep << ',' << r.wait << ',' << csv_number(r.q) << ',' << r.latency_total << ','
     << csv_number(r.alpha_fp32_hidden) << ',' << csv_number(r.alpha_int8_hidden) << ',' << r.n_layers
     << ',' << r.samples << "\n";
  return os.str();
}

std::vector<MapeRow> sweep_mape(std::span<const double> grid, int timestep, double mu, double sigma,
                                std::size_t intervals) {
  if (grid.empty()) throw validation_error("sweep grid is empty");
  std::vector<MapeRow> rows;
  for (double q : grid) rows.push_back({q, mape(q, timestep, mu, sigma, intervals)});
  return rows;
}

std::vector<SweepRow> sweep_q(const NormalizedAnn& norm, std::span<const double> grid, int timestep,
                              int wait, bool threshold_shift, bool int8,
                              std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                              double mu, double sigma) {
  if (grid.empty()) throw validation_error("sweep grid is empty");
  std::vector<SweepRow> rows;
  for (double q : grid) {
    SnnModel snn = build(norm, timestep, wait, BaseSchedule::uniform(q), threshold_shift);
    if (int8) snn = quantize_weights(snn);
    const BatchResult b = evaluate(snn, inputs);
    const double acc = accuracy(b.predictions, labels);
    const RunReport rep = make_report(snn, b, acc, wait);
    rows.push_back({q, wait, mape(q, timestep, mu, sigma), acc, rep.alpha_fp32, rep.alpha_int8,
                    rep.latency_total});
  }
  return rows;
}

std::vector<SweepRow> sweep_w(const SnnModel& snn, std::span<const int> grid,
                              std::span<const Tensor> inputs, std::span<const std::size_t> labels) {
  if (grid.empty()) throw validation_error("sweep grid is empty");
  std::vector<SweepRow> rows;
  for (int w : grid) {
    EngineOptions o;
    o.wait = w;
    const BatchResult b = evaluate(snn, inputs, o);
    const double acc = accuracy(b.predictions, labels);
    const RunReport rep = make_report(snn, b, acc, w);
    rows.push_back({rep.q, w, 0.0, acc, rep.alpha_fp32, rep.alpha_int8, rep.latency_total});
  }
  return rows;
}

std::string mape_csv(std::span<const MapeRow> rows, std::uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << "\nq,mape\n";
  for (const auto& r : rows) os << csv_number(r.q) << ',' << csv_number(r.mape) << "\n";
  return os.str();
}

std::string sweep_q_csv(std::span<const SweepRow> rows, std::uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << "\nq,mape,accuracy,alpha_fp32,alpha_int8\n";
  for (const auto& r : rows)
    os << csv_number(r.q) << ',' << csv_number(r.mape) << ',' << csv_number(r.accuracy) << ','
       << csv_number(r.alpha_fp32) << ',' << csv_number(r.alpha_int8) << "\n";
  return os.str();
}

std::string sweep_w_csv(std::span<const SweepRow> rows, std::uint64_t seed) {
  std::ostringstream os;
  os << "# seed=" << seed << "\nw,accuracy,alpha_fp32,alpha_int8,latency_total\n";
  for (const auto& r : rows)
    os << r.wait << ',' << csv_number(r.accuracy) << ',' << csv_number(r.alpha_fp32) << ','
       << csv_number(r.alpha_int8) << ',' << r.latency_total << "\n";
  return os.str();
}

}  // namespace onespike
