#include "onespike/model.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "onespike/errors.hpp"

namespace onespike {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 9> kKindNames{{
    {LayerKind::kConv2d, "Conv2d"},
    {LayerKind::kLinear, "Linear"},
    {LayerKind::kSparseLinear, "SparseLinear"},
    {LayerKind::kBatchNorm, "BatchNorm"},
    {LayerKind::kReLU, "ReLU"},
    {LayerKind::kMaxPool, "MaxPool"},
    {LayerKind::kAvgPool, "AvgPool"},
    {LayerKind::kResidualAdd, "ResidualAdd"},
    {LayerKind::kFlatten, "Flatten"},
}};

bool finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding, std::size_t layer) {
  if (kernel == 0 || stride == 0)
    throw format_error(FormatCode::kShapeMismatch, layer, "kernel and stride must be positive");
  if (in + 2 * padding < kernel)
    throw format_error(FormatCode::kShapeMismatch, layer,
                       "kernel " + std::to_string(kernel) + " larger than padded input " +
                           std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

void require(bool ok, FormatCode code, std::size_t layer, const std::string& msg) {
  if (!ok) throw format_error(code, layer, msg);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

CsrMatrix CsrMatrix::from_dense(std::size_t rows, std::size_t cols,
                                const std::vector<double>& dense) {
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.reserve(rows + 1);
  m.row_ptr.push_back(0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense[r * cols + c];
      if (v != 0.0) {
        m.col_idx.push_back(c);
        m.values.push_back(v);
      }
    }
    m.row_ptr.push_back(m.values.size());
  }
  return m;
}

std::vector<double> CsrMatrix::to_dense() const {
  std::vector<double> dense(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      dense[r * cols + col_idx[k]] += values[k];
  return dense;
}

Layer Layer::conv2d(Tensor weights, std::optional<Tensor> bias, std::size_t stride,
                    std::size_t padding) {
  Layer l;
  l.kind = LayerKind::kConv2d;
  l.geometry = {weights.rank() == 4 ? weights.dim(2) : 0, stride, padding};
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  return l;
}

Layer Layer::linear(Tensor weights, std::optional<Tensor> bias) {
  Layer l;
  l.kind = LayerKind::kLinear;
  l.weights = std::move(weights);
  l.bias = std::move(bias);
  return l;
}

Layer Layer::sparse_linear(CsrMatrix matrix) {
  Layer l;
  l.kind = LayerKind::kSparseLinear;
  l.sparse = std::move(matrix);
  return l;
}

Layer Layer::batch_norm(BatchNormParams params) {
  Layer l;
  l.kind = LayerKind::kBatchNorm;
  l.bn = std::move(params);
  return l;
}

Layer Layer::relu() { return Layer{}; }

Layer Layer::max_pool(std::size_t kernel, std::size_t stride) {
  Layer l;
  l.kind = LayerKind::kMaxPool;
  l.geometry = {kernel, stride == 0 ? kernel : stride, 0};
  return l;
}

Layer Layer::avg_pool(std::size_t kernel, std::size_t stride) {
  Layer l = max_pool(kernel, stride);
  l.kind = LayerKind::kAvgPool;
  return l;
}

Layer Layer::residual_add() {
  Layer l;
  l.kind = LayerKind::kResidualAdd;
  return l;
}

Layer Layer::flatten() {
  Layer l;
  l.kind = LayerKind::kFlatten;
  return l;
}

std::optional<std::size_t> AnnModel::skip_source(std::size_t merge) const {
  for (const auto& e : skip_edges)
    if (e.merge == merge) return e.source;
  return std::nullopt;
}

std::vector<Shape> infer_shapes(const AnnModel& model) {
  std::vector<Shape> out;
  out.reserve(model.layers.size());
  Shape cur = model.input_shape;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    switch (l.kind) {
      case LayerKind::kConv2d: {
        require(l.weights && l.weights->rank() == 4, FormatCode::kShapeMismatch, i,
                "Conv2d needs rank-4 weights");
        const Shape& w = l.weights->shape();
        require(cur.size() == 3 && cur[0] == w[1], FormatCode::kShapeMismatch, i,
                "Conv2d input " + shape_string(cur) + " does not match weights " +
                    shape_string(w));
        require(w[2] == w[3], FormatCode::kShapeMismatch, i, "only square kernels");
        const std::size_t k = w[2];
        cur = {w[0], pooled_extent(cur[1], k, l.geometry.stride, l.geometry.padding, i),
               pooled_extent(cur[2], k, l.geometry.stride, l.geometry.padding, i)};
        break;
      }
      case LayerKind::kLinear: {
        require(l.weights && l.weights->rank() == 2, FormatCode::kShapeMismatch, i,
                "Linear needs rank-2 weights");
        const Shape& w = l.weights->shape();
        require((cur.size() == 1 || cur.size() == 2) && cur.back() == w[1],
                FormatCode::kShapeMismatch, i,
                "Linear input " + shape_string(cur) + " does not match weights " +
                    shape_string(w));
        if (cur.size() == 1)
          cur = {l.split_sign ? 2 * w[0] : w[0]};
        else
          cur = {l.split_sign ? 2 * cur[0] : cur[0], w[0]};
        break;
      }
      case LayerKind::kSparseLinear: {
        require(l.sparse.has_value(), FormatCode::kShapeMismatch, i,
                "SparseLinear needs a matrix");
        require(!cur.empty() && cur.size() <= 2 && cur[0] == l.sparse->cols,
                FormatCode::kShapeMismatch, i,
                "SparseLinear input " + shape_string(cur) + " does not match " +
                    std::to_string(l.sparse->cols) + " columns");
        cur[0] = l.sparse->rows;
        break;
      }
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool: {
        require(cur.size() == 3, FormatCode::kShapeMismatch, i, "pooling needs (C,H,W) input");
        require(l.geometry.padding == 0, FormatCode::kShapeMismatch, i,
                "pooling padding is not supported");
        cur = {cur[0], pooled_extent(cur[1], l.geometry.kernel, l.geometry.stride, 0, i),
               pooled_extent(cur[2], l.geometry.kernel, l.geometry.stride, 0, i)};
        break;
      }
      case LayerKind::kFlatten:
        cur = {element_count(cur)};
        break;
      case LayerKind::kBatchNorm:
      case LayerKind::kReLU:
      case LayerKind::kResidualAdd:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

void validate(const AnnModel& model) {
  if (model.layers.empty()) throw manifest_error("model has no layers");
  if (model.input_shape.empty() || element_count(model.input_shape) == 0)
    throw manifest_error("input_shape must be non-empty");
  const auto shapes = infer_shapes(model);

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    const Shape& in = i == 0 ? model.input_shape : shapes[i - 1];
    const bool wants_weights = l.kind == LayerKind::kConv2d || l.kind == LayerKind::kLinear;
    const bool may_weight = l.kind == LayerKind::kAvgPool || l.kind == LayerKind::kResidualAdd;
    require(wants_weights == l.weights.has_value() || may_weight, FormatCode::kShapeMismatch,
            i, std::string(to_string(l.kind)) +
                   (wants_weights ? " requires weights" : " must not carry weights"));
    require(!l.bias || wants_weights, FormatCode::kShapeMismatch, i,
            std::string(to_string(l.kind)) + " must not carry a bias");
    require(l.bn.has_value() == (l.kind == LayerKind::kBatchNorm), FormatCode::kShapeMismatch,
            i, "bn parameters belong to BatchNorm layers only");
    require(l.sparse.has_value() == (l.kind == LayerKind::kSparseLinear),
            FormatCode::kShapeMismatch, i, "sparse matrix belongs to SparseLinear only");
    require(!l.split_sign || l.kind == LayerKind::kLinear || l.kind == LayerKind::kSparseLinear,
            FormatCode::kShapeMismatch, i, "split_sign applies to Linear and SparseLinear only");
    require(!l.split_sign || l.kind != LayerKind::kSparseLinear || l.sparse->cols % 2 == 0,
            FormatCode::kShapeMismatch, i, "sign-split SparseLinear needs an even column count");

    if (l.weights) {
      require(l.weights->all_finite(), FormatCode::kNonFinite, i, "non-finite weight");
      if (may_weight)
        require(l.weights->rank() == 1 && l.weights->size() == channel_count(in),
                FormatCode::kShapeMismatch, i, "per-channel multiplier must have one entry per channel");
    }
    if (l.bias) {
      require(l.bias->all_finite(), FormatCode::kNonFinite, i, "non-finite bias");
      require(l.bias->size() == l.weights->dim(0), FormatCode::kShapeMismatch, i,
              "bias length " + std::to_string(l.bias->size()) + " != output features " +
                  std::to_string(l.weights->dim(0)));
    }
    if (l.bn) {
      const auto& bn = *l.bn;
      const std::size_t c = bn.channels();
      require(bn.beta.size() == c && bn.mean.size() == c && bn.var.size() == c,
              FormatCode::kShapeMismatch, i, "BatchNorm arrays differ in length");
      require(c == channel_count(in), FormatCode::kShapeMismatch, i,
              "BatchNorm has " + std::to_string(c) + " channels, input has " +
                  std::to_string(channel_count(in)));
      require(finite(bn.gamma) && finite(bn.beta) && finite(bn.mean) && finite(bn.var),
              FormatCode::kNonFinite, i, "non-finite BatchNorm parameter");
      for (double v : bn.var)
        require(v > 0.0, FormatCode::kShapeMismatch, i, "BatchNorm variance must be > 0");
    }
    if (l.sparse) {
      const auto& m = *l.sparse;
      require(m.row_ptr.size() == m.rows + 1 && m.row_ptr.front() == 0 &&
                  m.row_ptr.back() == m.values.size() && m.col_idx.size() == m.values.size(),
              FormatCode::kShapeMismatch, i, "inconsistent CSR arrays");
      for (std::size_t r = 0; r < m.rows; ++r)
        require(m.row_ptr[r] <= m.row_ptr[r + 1], FormatCode::kShapeMismatch, i,
                "row_ptr must be non-decreasing");
      for (std::size_t c : m.col_idx)
        require(c < m.cols, FormatCode::kShapeMismatch, i, "column index out of range");
      require(finite(m.values), FormatCode::kNonFinite, i, "non-finite sparse value");
    }
    if (l.kind == LayerKind::kReLU) {
      require(i > 0, FormatCode::kMalformedManifest, i, "ReLU cannot be the first layer");
      const LayerKind prev = model.layers[i - 1].kind;
      require(prev == LayerKind::kConv2d || prev == LayerKind::kLinear ||
                  prev == LayerKind::kSparseLinear || prev == LayerKind::kBatchNorm ||
                  prev == LayerKind::kResidualAdd,
              FormatCode::kMalformedManifest, i,
              "ReLU must follow Conv2d/Linear/SparseLinear/BatchNorm/ResidualAdd, not " +
                  std::string(to_string(prev)));
    }
    if (l.kind == LayerKind::kResidualAdd) {
      std::size_t edges = 0;
      for (const auto& e : model.skip_edges) edges += e.merge == i;
      require(edges == 1, FormatCode::kMalformedManifest, i,
              "ResidualAdd needs exactly one skip edge");
    }
  }

  for (const auto& e : model.skip_edges) {
    if (e.merge >= model.layers.size() || e.source >= e.merge)
      throw manifest_error("skip edge (" + std::to_string(e.source) + ", " +
                           std::to_string(e.merge) + ") is not a forward edge");
    require(model.layers[e.merge].kind == LayerKind::kResidualAdd,
            FormatCode::kMalformedManifest, e.merge, "skip edge must end at a ResidualAdd");
    require(shapes[e.source] == shapes[e.merge], FormatCode::kShapeMismatch, e.merge,
            "skip source shape " + shape_string(shapes[e.source]) + " != " +
                shape_string(shapes[e.merge]));
  }
  if (model.layers.back().kind == LayerKind::kReLU)
    throw format_error(FormatCode::kMalformedManifest, model.layers.size() - 1,
                       "output layer must not end in ReLU");
  if (model.num_classes != 0 && shapes.back().back() != model.num_classes)
    throw manifest_error("num_classes " + std::to_string(model.num_classes) +
                         " does not match output width " +
                         std::to_string(shapes.back().back()));
}

}  // namespace onespike
