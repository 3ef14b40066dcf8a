#include "onespike/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "onespike/ann_kernels.hpp"
#include "onespike/errors.hpp"

namespace onespike {
namespace {

Tensor batch_norm(const Tensor& in, const BatchNormParams& bn) {
  Tensor out = in;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = channel_of(in.shape(), i);
    out[i] = bn.gamma[c] * (in[i] - bn.mean[c]) / std::sqrt(bn.var[c]) + bn.beta[c];
  }
  return out;
}

Tensor pool(const Tensor& in, const Layer& layer) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t k = layer.geometry.kernel, s = layer.geometry.stride;
  const std::size_t ho = (h - k) / s + 1, wo = (w - k) / s + 1;
  const bool is_max = layer.kind == LayerKind::kMaxPool;
  Tensor out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double v = in[(ch * h + y * s + ky) * w + x * s + kx];
            acc = is_max ? std::max(acc, v) : acc + v;
          }
        if (!is_max) {
          acc /= static_cast<double>(k * k);
          if (layer.weights) acc *= (*layer.weights)[ch];
        }
        out[(ch * ho + y) * wo + x] = acc;
      }
  return out;
}

}  // namespace

Tensor apply_layer(const Layer& layer, const Tensor& input, const Tensor* skip) {
  switch (layer.kind) {
    case LayerKind::kConv2d:
      return kernels::parallel::conv2d(input, *layer.weights,
                                       layer.bias ? &*layer.bias : nullptr,
                                       layer.geometry.stride, layer.geometry.padding);
    case LayerKind::kLinear:
      return kernels::parallel::linear(input, *layer.weights,
                                       layer.bias ? &*layer.bias : nullptr, layer.split_sign);
    case LayerKind::kSparseLinear:
      return kernels::parallel::sparse_linear(input, *layer.sparse);
    case LayerKind::kBatchNorm:
      return batch_norm(input, *layer.bn);
    case LayerKind::kReLU: {
      Tensor out = input;
      for (double& v : out.values()) v = std::max(v, 0.0);
      return out;
    }
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      return pool(input, layer);
    case LayerKind::kResidualAdd: {
      if (!skip || skip->shape() != input.shape())
        throw validation_error("ResidualAdd skip input missing or mis-shaped");
      Tensor out = input;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double scale =
            layer.weights ? (*layer.weights)[channel_of(input.shape(), i)] : 1.0;
        out[i] += scale * (*skip)[i];
      }
      return out;
    }
    case LayerKind::kFlatten:
      return input.reshaped({input.size()});
  }
  return input;
}

std::vector<Tensor> forward(const AnnModel& model, const Tensor& input) {
  if (input.shape() != model.input_shape)
    throw validation_error("input shape " + shape_string(input.shape()) +
                           " does not match model input " + shape_string(model.input_shape));
  std::vector<Tensor> outs;
  outs.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Tensor& in = i == 0 ? input : outs[i - 1];
    const Tensor* skip = nullptr;
    if (model.layers[i].kind == LayerKind::kResidualAdd) {
      if (auto src = model.skip_source(i)) skip = &outs[*src];
    }
    outs.push_back(apply_layer(model.layers[i], in, skip));
  }
  return outs;
}

Tensor predict_logits(const AnnModel& model, const Tensor& input) {
  return std::move(forward(model, input).back());
}

std::size_t argmax_class(const Tensor& logits) {
  if (logits.empty()) throw validation_error("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) return {argmax_class(logits)};
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 1; c < cols; ++c)
      if (logits[r * cols + c] > logits[r * cols + out[r]]) out[r] = c;
  return out;
}

}  // namespace onespike
