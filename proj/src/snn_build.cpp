#include <algorithm>
#include <cmath>
#include <map>

#include "onespike/errors.hpp"
#include "onespike/metrics.hpp"
#include "onespike/phase_codec.hpp"
#include "onespike/snn_kernels.hpp"
#include "onespike/snn_model.hpp"

namespace onespike {
namespace {

Error build_error(std::size_t layer, const std::string& msg) {
  return Error(ErrorKind::kValidation, "layer " + std::to_string(layer) + ": " + msg, layer);
}

void check_base(double q, const std::string& what) {
  if (!(q > 1.0 && q <= 2.0))
    throw validation_error(what + " must lie in (1, 2], got " + std::to_string(q));
}

/// Multiplies every weight feeding output channel c by `factor`.
void scale_output_channel(SnnLayer& l, std::size_t c, double factor, std::size_t ann_layer) {
  if (factor == 1.0) return;
  switch (l.kind) {
    case SnnKind::kConv: {
      const std::size_t per = l.weights.size() / l.weights.dim(0);
      for (std::size_t k = 0; k < per; ++k) l.weights[c * per + k] *= factor;
      break;
    }
    case SnnKind::kDense: {
      const std::size_t in = l.weights.dim(1);
      for (std::size_t i = 0; i < in; ++i) l.weights[c * in + i] *= factor;
      break;
    }
    default:
      throw build_error(ann_layer, "BatchNorm rescaling after SparseLinear is not supported");
  }
}

/// Output feature index and sign feeding flat output neuron j of a dense layer.
std::pair<std::size_t, double> dense_source(const SnnLayer& l, std::size_t j) {
  const std::size_t features = l.weights.dim(0);
  const std::size_t f = j % features;
  if (!l.split_sign) return {f, 1.0};
  const std::size_t half = element_count(l.out_shape) / 2;
  return {f, j < half ? 1.0 : -1.0};
}

}  // namespace

std::string_view to_string(SnnKind kind) {
  switch (kind) {
    case SnnKind::kConv: return "Conv";
    case SnnKind::kDense: return "Dense";
    case SnnKind::kSparse: return "Sparse";
    case SnnKind::kMaxPool: return "MaxPool";
  }
  return "?";
}

std::optional<SnnKind> parse_snn_kind(std::string_view name) {
  for (SnnKind k : {SnnKind::kConv, SnnKind::kDense, SnnKind::kSparse, SnnKind::kMaxPool})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

double BaseSchedule::at(std::size_t index) const {
  if (q_hidden.empty()) throw validation_error("base schedule is empty");
  return q_hidden.size() == 1 ? q_hidden[0] : q_hidden.at(index);
}

void BaseSchedule::validate(std::size_t neuron_layers) const {
  if (q_in != 2.0) throw validation_error("input coding base must be 2");
  if (q_hidden.empty()) throw validation_error("base schedule is empty");
  if (q_hidden.size() != 1 && q_hidden.size() != neuron_layers)
    throw validation_error("base schedule has " + std::to_string(q_hidden.size()) +
                           " entries for " + std::to_string(neuron_layers) + " layers");
  for (double q : q_hidden) check_base(q, "base Q");
}

std::size_t SnnModel::neuron_layers() const {
  return static_cast<std::size_t>(std::count_if(
      layers.begin(), layers.end(), [](const SnnLayer& l) { return l.kind != SnnKind::kMaxPool; }));
}

void SnnModel::validate() const {
  if (timestep < 1 || timestep > kMaxTimestep)
    throw validation_error("timestep T must lie in [1, " + std::to_string(kMaxTimestep) + "]");
  if (wait < 0 || wait > timestep)
    throw validation_error("wait w must lie in [0, T], got " + std::to_string(wait));
  if (layers.empty()) throw validation_error("SNN has no layers");
  if (!(input_scale > 0.0) || !(output_scale > 0.0))
    throw validation_error("SNN input/output scales must be positive");
  schedule.validate(neuron_layers());

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const SnnLayer& l = layers[i];
    const bool last = i + 1 == layers.size();
    auto fail = [&](const std::string& msg) {
      return Error(ErrorKind::kValidation, "SNN layer " + std::to_string(i) + ": " + msg, i);
    };
    const Shape& expected_in = i == 0 ? input_shape : layers[i - 1].out_shape;
    if (element_count(l.in_shape) != element_count(expected_in))
      throw fail("input " + shape_string(l.in_shape) + " does not match producer " +
                 shape_string(expected_in));
    const double producer_q = i == 0 ? schedule.q_in : layers[i - 1].q_cur;
    if (l.q_prev != producer_q) throw fail("q_prev does not match the producer's base");
    check_base(l.q_cur, "q_cur");
    if (l.fires == last) throw fail(last ? "output layer must not fire" : "hidden layer must fire");

    if (expected_output_shape(l) != l.out_shape)
      throw fail("output " + shape_string(l.out_shape) + " does not follow from its parameters");
    if (l.kind == SnnKind::kMaxPool) {
      if (last) throw fail("output layer cannot be max pooling");
      if (i == 0) throw fail("max pooling cannot read the binary-coded input");
      if (l.q_cur != l.q_prev) throw fail("max pooling cannot change the base");
      continue;
    }
    const std::size_t n = l.neurons();
    if (l.threshold.size() != n || l.v_init.size() != n)
      throw fail("threshold/v_init length differs from " + std::to_string(n) + " neurons");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(l.v_init[j])) throw fail("non-finite initial potential");
      if (l.fires && !(l.threshold[j] > 0.0 && std::isfinite(l.threshold[j])))
        throw fail("thresholds must be positive and finite");
    }
    if (l.kind == SnnKind::kSparse) {
      if (!l.sparse) throw fail("sparse layer without a matrix");
    } else if (!l.weights.all_finite() || l.weights.empty()) {
      throw fail("missing or non-finite weights");
    }
    if (l.skip_source) {
      const std::size_t s = *l.skip_source;
      if (s >= i) throw fail("skip source must precede the merge");
      if (element_count(layers[s].out_shape) != n) throw fail("skip source shape differs");
      if (layers[s].q_cur != l.q_cur) throw fail("skip source uses a different base");
      if (l.skip_weight.size() != channel_count(l.out_shape))
        throw fail("skip weights need one entry per channel");
    }
  }
}

SnnModel build(const NormalizedAnn& norm, int timestep, int wait, const BaseSchedule& schedule,
               bool threshold_shift) {
  const AnnModel& model = norm.model;
  const auto shapes = infer_shapes(model);
  const auto macs = op_count_ann(model);

  SnnModel snn;
  snn.name = model.name;
  snn.input_shape = model.input_shape;
  snn.num_classes = model.num_classes;
  snn.timestep = timestep;
  snn.wait = wait;
  snn.schedule = schedule;
  snn.threshold_shift = threshold_shift;
  snn.input_scale = norm.input_scale;
  snn.output_scale = norm.output_scale();

  // SNN layer producing the activation at each ANN layer index.
  std::map<std::size_t, std::size_t> snn_at;
  double prev_q = schedule.q_in;
  std::size_t neuron_index = 0;

  for (const Unit& u : norm.units) {
    const Layer& head = model.layers[u.first];
    const Shape& in_shape = u.first == 0 ? model.input_shape : shapes[u.first - 1];
    if (head.kind == LayerKind::kFlatten) {
      if (!snn.layers.empty()) snn_at[u.last] = snn.layers.size() - 1;
      continue;
    }
    SnnLayer l;
    l.in_shape = in_shape;
    l.out_shape = shapes[u.last];
    l.ann_first = u.first;
    l.ann_last = u.last;
    l.q_prev = prev_q;

    if (head.kind == LayerKind::kMaxPool) {
      if (snn.layers.empty()) throw build_error(u.first, "max pooling cannot read the binary-coded input");
      l.kind = SnnKind::kMaxPool;
      l.geometry = head.geometry;
      l.q_cur = prev_q;
      snn_at[u.last] = snn.layers.size();
      snn.layers.push_back(std::move(l));
      continue;
    }

    l.q_cur = schedule.at(neuron_index++);
    check_base(l.q_cur, "base Q");
    l.fires = !u.is_output;
    l.op_ann = macs[u.first];
    const std::size_t n = l.neurons();
    std::vector<double> bias(n, 0.0);

    switch (head.kind) {
      case LayerKind::kConv2d: {
        l.kind = SnnKind::kConv;
        l.weights = *head.weights;
        l.geometry = head.geometry;
        if (head.bias)
          for (std::size_t j = 0; j < n; ++j) bias[j] = (*head.bias)[channel_of(l.out_shape, j)];
        break;
      }
      case LayerKind::kAvgPool: {
        l.kind = SnnKind::kConv;
        const std::size_t c = in_shape[0], k = head.geometry.kernel;
        l.groups = c;
        l.geometry = {k, head.geometry.stride, 0};
        l.weights = Tensor({c, 1, k, k});
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double m = head.weights ? (*head.weights)[ch] : 1.0;
          for (std::size_t i = 0; i < k * k; ++i)
            l.weights[ch * k * k + i] = m / static_cast<double>(k * k);
        }
        break;
      }
      case LayerKind::kLinear: {
        l.kind = SnnKind::kDense;
        l.weights = *head.weights;
        l.split_sign = head.split_sign;
        if (head.bias)
          for (std::size_t j = 0; j < n; ++j) {
            const auto [f, sign] = dense_source(l, j);
            bias[j] = sign * (*head.bias)[f];
          }
        break;
      }
      case LayerKind::kSparseLinear:
        l.kind = SnnKind::kSparse;
        l.sparse = *head.sparse;
        l.split_sign = head.split_sign;
        break;
      default:
        throw build_error(u.first, "cannot convert " + std::string(to_string(head.kind)));
    }

    const double theta = threshold_factor(l.q_cur, threshold_shift ? Rounding::kRound : Rounding::kFloor);
    const std::size_t channels = channel_count(l.out_shape);
    std::vector<double> scale(channels, 1.0);  // sigma / |gamma|
    std::vector<double> sign(channels, 1.0);
    l.threshold.assign(n, u.is_output ? 1.0 : theta);
    l.v_init = bias;

    if (u.batch_norm) {
      if (l.split_sign) throw build_error(*u.batch_norm, "BatchNorm after a sign-split layer");
      const BatchNormParams& bn = *model.layers[*u.batch_norm].bn;
      for (std::size_t c = 0; c < channels; ++c) {
        if (bn.gamma[c] == 0.0)
          throw build_error(*u.batch_norm, "BatchNorm gamma is zero in channel " + std::to_string(c));
        const double sigma = std::sqrt(bn.var[c]);
        if (u.is_output) {
          // No firing: fold the affine map into the weights.
          scale_output_channel(l, c, bn.gamma[c] / sigma, *u.batch_norm);
        } else {
          sign[c] = bn.gamma[c] > 0.0 ? 1.0 : -1.0;
          scale[c] = sigma / std::abs(bn.gamma[c]);
          scale_output_channel(l, c, sign[c], *u.batch_norm);
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t c = channel_of(l.out_shape, j);
        const double sigma = std::sqrt(bn.var[c]);
        if (u.is_output) {
          l.v_init[j] = bn.gamma[c] / sigma * (bias[j] - bn.mean[c]) + bn.beta[c];
        } else {
          l.threshold[j] = theta * scale[c];
          l.v_init[j] = sign[c] * (bias[j] - bn.mean[c]) + bn.beta[c] * scale[c];
        }
      }
    }

    if (u.residual) {
      const std::size_t src_ann = *model.skip_source(*u.residual);
      const auto it = snn_at.find(src_ann);
      if (it == snn_at.end()) throw build_error(*u.residual, "skip source is not an SNN layer output");
      const SnnLayer& src = snn.layers[it->second];
      if (src.q_cur != l.q_cur)
        throw build_error(*u.residual, "skip path and merge layer use different bases");
      const Layer& add = model.layers[*u.residual];
      l.skip_source = it->second;
      l.skip_weight.resize(channels);
      for (std::size_t c = 0; c < channels; ++c)
        l.skip_weight[c] = (add.weights ? (*add.weights)[c] : 1.0) * scale[c];
    }

    prev_q = l.q_cur;
    snn_at[u.last] = snn.layers.size();
    snn.layers.push_back(std::move(l));
  }

  snn.validate();
  return snn;
}

QuantInfo quantize_dequantize(std::vector<double>& values, int bits) {
  if (bits != 8) throw validation_error("only 8-bit quantization is supported");
  QuantInfo info;
  info.bits = bits;
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs == 0.0) {
    info.all_zero = true;
    return info;
  }
  const double levels = static_cast<double>((1 << (bits - 1)) - 1);
  info.scale = max_abs / levels;
  for (double& v : values) v = std::clamp(std::round(v / info.scale), -levels, levels) * info.scale;
  return info;
}

SnnModel quantize_weights(const SnnModel& snn, int bits) {
  SnnModel out = snn;
  for (SnnLayer& l : out.layers) {
    if (l.kind == SnnKind::kMaxPool) continue;
    if (l.kind == SnnKind::kSparse) {
      l.quant = quantize_dequantize(l.sparse->values, bits);
    } else {
      std::vector<double> w(l.weights.values().begin(), l.weights.values().end());
      l.quant = quantize_dequantize(w, bits);
      l.weights = Tensor(l.weights.shape(), std::move(w));
    }
    if (!l.skip_weight.empty()) quantize_dequantize(l.skip_weight, bits);
  }
  return out;
}

AnnModel plan_gcn(const AnnModel& model) {
  validate(model);
  AnnModel out = model;
  out.layers.clear();
  const auto& layers = model.layers;
  bool rewritten = false;
  for (std::size_t i = 0; i < layers.size();) {
    const bool gcn = layers[i].kind == LayerKind::kLinear && !layers[i].split_sign &&
                     i + 1 < layers.size() && layers[i + 1].kind == LayerKind::kSparseLinear &&
                     !layers[i + 1].split_sign;
    if (!gcn) {
      out.layers.push_back(layers[i++]);
      continue;
    }
    if (!model.skip_edges.empty())
      throw validation_error("plan_gcn does not support skip edges");
    rewritten = true;
    Layer message = layers[i];
    message.split_sign = true;
    out.layers.push_back(std::move(message));
    out.layers.push_back(Layer::relu());

    const CsrMatrix& a = *layers[i + 1].sparse;
    CsrMatrix split;
    split.rows = a.rows;
    split.cols = 2 * a.cols;
    split.row_ptr.push_back(0);
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
        split.col_idx.push_back(a.col_idx[k]);
        split.values.push_back(a.values[k]);
      }
      for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
        split.col_idx.push_back(a.col_idx[k] + a.cols);
        split.values.push_back(-a.values[k]);
      }
      split.row_ptr.push_back(split.values.size());
    }
    Layer aggregate = Layer::sparse_linear(std::move(split));
    aggregate.split_sign = true;
    out.layers.push_back(std::move(aggregate));
    i += 2;
  }
  if (rewritten) validate(out);
  return out;
}

}  // namespace onespike
