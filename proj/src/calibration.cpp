#include "onespike/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <json.hpp>

#include "onespike/errors.hpp"
#include "onespike/forward.hpp"
#include "onespike/io.hpp"

namespace onespike {
namespace {

using nlohmann::json;

/// Keeps the `capacity` largest values seen (a min-heap), enough to answer one
/// quantile exactly. Merging is commutative.
class TopK {
 public:
  explicit TopK(std::size_t capacity = 1) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(double v) {
    if (heap_.size() < capacity_) {
      heap_.push_back(v);
      std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
    } else if (v > heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
      heap_.back() = v;
      std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
    }
  }
  void merge(const TopK& other) {
    for (double v : other.heap_) push(v);
  }
  /// Largest values, descending.
  std::vector<double> sorted_desc() const {
    std::vector<double> v = heap_;
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
  }

 private:
  std::size_t capacity_;
  std::vector<double> heap_;
};

/// Quantile at p of n values, given the top (n - floor(p(n-1))) of them.
double quantile_from_top(const std::vector<double>& top_desc, std::size_t n, double p) {
  const double pos = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  auto ascending = [&](std::size_t idx) { return top_desc[n - 1 - idx]; };
  const double v_lo = ascending(lo);
  if (lo + 1 >= n) return v_lo;
  return v_lo + (pos - static_cast<double>(lo)) * (ascending(lo + 1) - v_lo);
}

Error conversion_error(std::size_t layer, const std::string& msg) {
  return Error(ErrorKind::kValidation, "layer " + std::to_string(layer) + ": " + msg, layer);
}

}  // namespace

const LayerStats& CalibrationStats::at(std::size_t layer) const {
  for (const auto& s : per_layer)
    if (s.layer == layer) return s;
  throw validation_error("calibration stats do not cover layer " + std::to_string(layer));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw validation_error("quantile of an empty set");
  if (!(p >= 0.0 && p <= 1.0)) throw validation_error("quantile fraction must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= values.size()) return values[lo];
  return values[lo] + (pos - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

CalibrationStats collect_stats(const AnnModel& model, std::span<const Tensor> inputs,
                               double percentile) {
  if (inputs.empty()) throw validation_error("calibration set is empty");
  if (!(percentile > 0.0 && percentile <= 1.0))
    throw validation_error("percentile must lie in (0, 1], got " + std::to_string(percentile));

  const auto shapes = infer_shapes(model);
  const std::size_t n_layers = model.layers.size();
  const std::size_t n_inputs = inputs.size();

  // Values per channel per layer, and the top-K capacity that answers the quantile.
  std::vector<std::size_t> per_channel_count(n_layers);
  std::vector<std::size_t> capacity(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    per_channel_count[l] = n_inputs * (element_count(shapes[l]) / channel_count(shapes[l]));
    const std::size_t n = per_channel_count[l];
    const auto lo = static_cast<std::size_t>(std::floor(percentile * static_cast<double>(n - 1)));
    capacity[l] = n - lo;
  }
  auto fresh = [&] {
    std::vector<std::vector<TopK>> acc(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l)
      acc[l].assign(channel_count(shapes[l]), TopK(capacity[l]));
    return acc;
  };

  std::vector<std::vector<TopK>> total = fresh();
  double input_max = 0.0;

#pragma omp parallel
  {
    auto local = fresh();
    double local_input_max = 0.0;
#pragma omp for schedule(dynamic)
    for (long s = 0; s < static_cast<long>(n_inputs); ++s) {
      const Tensor& x = inputs[static_cast<std::size_t>(s)];
      for (double v : x.values()) local_input_max = std::max(local_input_max, v);
      const auto outs = forward(model, x);
      for (std::size_t l = 0; l < n_layers; ++l) {
        const bool last = l + 1 == n_layers;
        const Tensor& t = outs[l];
        for (std::size_t i = 0; i < t.size(); ++i)
          local[l][channel_of(t.shape(), i)].push(last ? std::abs(t[i]) : std::max(t[i], 0.0));
      }
    }
#pragma omp critical
    {
      input_max = std::max(input_max, local_input_max);
      for (std::size_t l = 0; l < n_layers; ++l)
        for (std::size_t c = 0; c < total[l].size(); ++c) total[l][c].merge(local[l][c]);
    }
  }

  CalibrationStats stats;
  stats.percentile = percentile;
  stats.samples = n_inputs;
  stats.input_max = input_max;
  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerStats ls;
    ls.layer = l;
    for (const auto& acc : total[l])
      ls.channel_max.push_back(quantile_from_top(acc.sorted_desc(), per_channel_count[l], percentile));
    ls.layer_max = *std::max_element(ls.channel_max.begin(), ls.channel_max.end());
    const LayerKind kind = model.layers[l].kind;
    if (kind == LayerKind::kReLU || (kind == LayerKind::kAvgPool && l + 1 < n_layers)) {
      for (std::size_t c = 0; c < ls.channel_max.size(); ++c)
        if (ls.channel_max[c] == 0.0) stats.dead_channels.push_back({l, c});
    }
    stats.per_layer.push_back(std::move(ls));
  }
  return stats;
}

std::string stats_to_json(const CalibrationStats& stats) {
  json layers = json::array();
  for (const auto& s : stats.per_layer)
    layers.push_back({{"layer", s.layer}, {"channel_max", s.channel_max}, {"layer_max", s.layer_max}});
  json dead = json::array();
  for (const auto& d : stats.dead_channels) dead.push_back({d.layer, d.channel});
  json j = {{"percentile", stats.percentile}, {"samples", stats.samples},
            {"input_max", stats.input_max},   {"per_layer", std::move(layers)},
            {"dead_channels", std::move(dead)}};
  return j.dump(2) + "\n";
}

CalibrationStats stats_from_json(const std::string& text) {
  CalibrationStats stats;
  try {
    const json j = json::parse(text);
    stats.percentile = j.value("percentile", 1.0);
    stats.samples = j.value("samples", std::size_t{0});
    stats.input_max = j.value("input_max", 1.0);
    for (const auto& e : j.at("per_layer")) {
      LayerStats ls;
      ls.layer = e.at("layer").get<std::size_t>();
      ls.channel_max = e.at("channel_max").get<std::vector<double>>();
      ls.layer_max = e.at("layer_max").get<double>();
      for (double v : ls.channel_max)
        if (!(v >= 0.0) || !std::isfinite(v))
          throw manifest_error("stats for layer " + std::to_string(ls.layer) +
                               " hold a negative or non-finite maximum");
      stats.per_layer.push_back(std::move(ls));
    }
    for (const auto& d : j.value("dead_channels", json::array()))
      stats.dead_channels.push_back({d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>()});
  } catch (const json::exception& e) {
    throw manifest_error(std::string("malformed stats: ") + e.what());
  }
  return stats;
}

void save_stats(const CalibrationStats& stats, const std::filesystem::path& path) {
  write_file_atomic(path, stats_to_json(stats));
}

CalibrationStats load_stats(const std::filesystem::path& path) {
  return stats_from_json(read_text_file(path));
}

std::vector<Unit> partition_units(const AnnModel& model) {
  std::vector<Unit> units;
  const auto& layers = model.layers;
  std::size_t i = 0;
  while (i < layers.size()) {
    const LayerKind kind = layers[i].kind;
    Unit u;
    u.first = i;
    switch (kind) {
      case LayerKind::kMaxPool:
      case LayerKind::kFlatten:
        u.last = i++;
        u.mode = NormMode::kPassThrough;
        break;
      case LayerKind::kConv2d:
      case LayerKind::kLinear:
      case LayerKind::kSparseLinear:
      case LayerKind::kAvgPool: {
        u.mode = kind == LayerKind::kConv2d ? NormMode::kChannelWise : NormMode::kLayerWise;
        u.last = i++;
        if (i < layers.size() && layers[i].kind == LayerKind::kBatchNorm) u.batch_norm = u.last = i++;
        if (i < layers.size() && layers[i].kind == LayerKind::kResidualAdd) u.residual = u.last = i++;
        if (i < layers.size() && layers[i].kind == LayerKind::kReLU) {
          u.has_relu = true;
          u.last = i++;
        }
        break;
      }
      default:
        throw conversion_error(i, std::string(to_string(kind)) +
                                      " cannot start an SNN layer; expected Conv2d, Linear, "
                                      "SparseLinear, AvgPool, MaxPool or Flatten");
    }
    units.push_back(u);
  }
  units.back().is_output = true;
  const Unit& out = units.back();
  if (out.mode == NormMode::kPassThrough)
    throw conversion_error(out.first, "the output layer must be a weighted layer");
  if (out.residual) throw conversion_error(out.first, "the output layer cannot merge a skip path");
  for (const Unit& u : units) {
    if (u.is_output || u.mode == NormMode::kPassThrough) continue;
    if (!u.has_relu && layers[u.first].kind != LayerKind::kAvgPool)
      throw conversion_error(u.first, "hidden " + std::string(to_string(layers[u.first].kind)) +
                                          " has no ReLU and cannot be spike-encoded "
                                          "(GCN layers need plan_gcn first)");
  }
  for (const auto& e : model.skip_edges) {
    const bool ends_unit = std::any_of(units.begin(), units.end(), [&](const Unit& u) {
      return u.last == e.source && !u.is_output &&
             (u.has_relu || u.mode == NormMode::kPassThrough);
    });
    if (!ends_unit)
      throw conversion_error(e.merge, "skip source " + std::to_string(e.source) +
                                          " is not a spiking layer output");
  }
  return units;
}

NormalizedAnn normalize(const AnnModel& model, const CalibrationStats& stats) {
  validate(model);
  NormalizedAnn out;
  out.units = partition_units(model);
  out.model = model;
  out.stats = stats;
  out.layer_modes.assign(model.layers.size(), NormMode::kPassThrough);

  if (!(stats.input_max > 0.0)) throw numeric_error("calibration input maximum is zero");
  out.input_scale = stats.input_max;

  const auto shapes = infer_shapes(model);
  ActivationScale in_scale{model.input_shape,
                           std::vector<double>(channel_count(model.input_shape), stats.input_max)};
  // Scale at each unit's output layer, for skip lookups.
  std::vector<std::optional<ActivationScale>> scale_at(model.layers.size());

  for (const Unit& u : out.units) {
    Layer& head = out.model.layers[u.first];
    const Shape& out_shape = shapes[u.last];

    if (u.mode == NormMode::kPassThrough) {
      ActivationScale s{out_shape, {}};
      if (head.kind == LayerKind::kMaxPool) {
        s.per_channel = in_scale.per_channel;
      } else {  // Flatten
        s.per_channel.resize(element_count(out_shape));
        for (std::size_t k = 0; k < s.per_channel.size(); ++k) s.per_channel[k] = in_scale.at_element(k);
      }
      in_scale = s;
      scale_at[u.last] = s;
      out.scales.push_back(std::move(s));
      continue;
    }

    // Divisors for this unit's output channels.
    const LayerStats& ls = stats.at(u.last);
    const std::size_t channels = channel_count(out_shape);
    if (ls.channel_max.size() != channels)
      throw validation_error("stats for layer " + std::to_string(u.last) + " have " +
                             std::to_string(ls.channel_max.size()) + " channels, expected " +
                             std::to_string(channels));
    if (!(ls.layer_max > 0.0))
      throw numeric_error("layer " + std::to_string(u.last) + " never activates on the calibration set",
                          u.last);
    ActivationScale s{out_shape, std::vector<double>(channels, ls.layer_max)};
    if (u.mode == NormMode::kChannelWise) {
      for (std::size_t c = 0; c < channels; ++c) {
        if (ls.channel_max[c] > 0.0) {
          s.per_channel[c] = ls.channel_max[c];
        } else {
          out.warnings.push_back("layer " + std::to_string(u.last) + " channel " + std::to_string(c) +
                                 " is dead; normalized by the layer maximum");
        }
      }
    }
    out.layer_modes[u.first] = u.mode;

    switch (head.kind) {
      case LayerKind::kConv2d: {
        Tensor& w = *head.weights;
        const std::size_t c_out = w.dim(0), c_in = w.dim(1), kk = w.dim(2) * w.dim(3);
        for (std::size_t o = 0; o < c_out; ++o)
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t k = 0; k < kk; ++k)
              w[(o * c_in + c) * kk + k] *= in_scale.per_channel[c] / s.per_channel[o];
        if (head.bias)
          for (std::size_t o = 0; o < c_out; ++o) (*head.bias)[o] /= s.per_channel[o];
        break;
      }
      case LayerKind::kLinear: {
        Tensor& w = *head.weights;
        const std::size_t n_out = w.dim(0), n_in = w.dim(1);
        const double m = ls.layer_max;
        for (std::size_t j = 0; j < n_out; ++j)
          for (std::size_t i = 0; i < n_in; ++i)
            w[j * n_in + i] *= in_scale.per_channel[channel_of(in_scale.shape, i)] / m;
        if (head.bias)
          for (std::size_t j = 0; j < n_out; ++j) (*head.bias)[j] /= m;
        break;
      }
      case LayerKind::kSparseLinear: {
        const auto [lo, hi] = std::minmax_element(in_scale.per_channel.begin(), in_scale.per_channel.end());
        if (*lo != *hi)
          throw conversion_error(u.first, "SparseLinear input must be layer-wise normalized");
        for (double& v : head.sparse->values) v *= *lo / ls.layer_max;
        break;
      }
      case LayerKind::kAvgPool: {
        std::vector<double> mult(channels, 1.0);
        if (head.weights) mult.assign(head.weights->values().begin(), head.weights->values().end());
        for (std::size_t c = 0; c < channels; ++c) mult[c] *= in_scale.per_channel[c] / ls.layer_max;
        head.weights = Tensor({channels}, std::move(mult));
        break;
      }
      default:
        break;
    }

    if (u.batch_norm) {
      BatchNormParams& bn = *out.model.layers[*u.batch_norm].bn;
      for (std::size_t c = 0; c < bn.channels(); ++c) {
        bn.mean[c] /= s.per_channel[c];
        bn.beta[c] /= s.per_channel[c];
      }
    }
    if (u.residual) {
      Layer& add = out.model.layers[*u.residual];
      const std::size_t src = *model.skip_source(*u.residual);
      const ActivationScale& skip_scale = *scale_at[src];
      std::vector<double> mult(channels, 1.0);
      if (add.weights) mult.assign(add.weights->values().begin(), add.weights->values().end());
      for (std::size_t c = 0; c < channels; ++c) mult[c] *= skip_scale.per_channel[c] / s.per_channel[c];
      add.weights = Tensor({channels}, std::move(mult));
    }

    in_scale = s;
    scale_at[u.last] = s;
    out.scales.push_back(std::move(s));
  }

  for (const auto& l : out.model.layers) {
    if (l.weights && !l.weights->all_finite())
      throw numeric_error("normalization produced a non-finite weight");
  }
  validate(out.model);
  return out;
}

}  // namespace onespike
