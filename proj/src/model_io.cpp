#include "onespike/model_io.hpp"

#include <cmath>
#include <json.hpp>

#include "onespike/errors.hpp"

namespace onespike {
namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* key, std::size_t layer) {
  if (!j.contains(key))
    throw format_error(FormatCode::kMalformedManifest, layer,
                       std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw format_error(FormatCode::kMalformedManifest, layer,
                       std::string("bad field '") + key + "': " + e.what());
  }
}

std::vector<double> read_array(const BlobReader& blob, BlobRef ref, std::size_t layer,
                               const std::string& what) {
  std::vector<double> out;
  if (!blob.read(ref, out))
    throw format_error(FormatCode::kShapeMismatch, layer,
                       what + " at offset " + std::to_string(ref.offset_bytes) + " with length " +
                           std::to_string(ref.length) + " exceeds blob of " +
                           std::to_string(blob.size_bytes()) + " bytes");
  for (double v : out)
    if (!std::isfinite(v))
      throw format_error(FormatCode::kNonFinite, layer, "non-finite value in " + what);
  return out;
}

Tensor read_tensor(const json& j, const BlobReader& blob, std::size_t layer,
                   const char* shape_key, const char* offset_key, const char* length_key,
                   const std::string& what) {
  Shape shape = field<Shape>(j, shape_key, layer);
  BlobRef ref{field<std::size_t>(j, offset_key, layer), field<std::size_t>(j, length_key, layer)};
  if (element_count(shape) != ref.length)
    throw format_error(FormatCode::kShapeMismatch, layer,
                       what + " shape " + shape_string(shape) + " disagrees with length " +
                           std::to_string(ref.length));
  return Tensor(std::move(shape), read_array(blob, ref, layer, what));
}

json tensor_ref(BlobWriter& blob, const Tensor& t) {
  const BlobRef ref = blob.append(t.values());
  return {{"shape", t.shape()}, {"offset_bytes", ref.offset_bytes}, {"length", ref.length}};
}

Layer parse_layer(const json& j, const BlobReader& blob, std::size_t i) {
  if (!j.is_object()) throw format_error(FormatCode::kMalformedManifest, i, "layer is not an object");
  const auto kind_name = field<std::string>(j, "kind", i);
  const auto kind = parse_layer_kind(kind_name);
  if (!kind)
    throw format_error(FormatCode::kUnsupportedKind, i, "unsupported layer kind '" + kind_name + "'");

  Layer l;
  l.kind = *kind;
  l.geometry.kernel = j.value("kernel", std::size_t{0});
  l.geometry.stride = j.value("stride", std::size_t{0});
  l.geometry.padding = j.value("padding", std::size_t{0});
  l.split_sign = j.value("split_sign", false);

  if (j.contains("offset_bytes") && *kind != LayerKind::kSparseLinear)
    l.weights = read_tensor(j, blob, i, "shape", "offset_bytes", "length", "weights");
  if (j.contains("bias_offset_bytes")) {
    BlobRef ref{field<std::size_t>(j, "bias_offset_bytes", i),
                field<std::size_t>(j, "bias_length", i)};
    auto b = read_array(blob, ref, i, "bias");
    const std::size_t n = b.size();
    l.bias = Tensor({n}, std::move(b));
  }

  switch (*kind) {
    case LayerKind::kConv2d:
      if (!l.weights || l.weights->rank() != 4)
        throw format_error(FormatCode::kShapeMismatch, i, "Conv2d needs rank-4 weights");
      l.geometry.kernel = l.weights->dim(2);
      if (l.geometry.stride == 0) l.geometry.stride = 1;
      break;
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      if (l.geometry.kernel == 0)
        throw format_error(FormatCode::kMalformedManifest, i, "pooling needs 'kernel'");
      if (l.geometry.stride == 0) l.geometry.stride = l.geometry.kernel;
      break;
    case LayerKind::kBatchNorm: {
      const json& bn = j.contains("bn") ? j.at("bn") : json();
      if (!bn.is_object())
        throw format_error(FormatCode::kMalformedManifest, i, "BatchNorm needs 'bn' offsets");
      const auto c = field<std::size_t>(j, "channels", i);
      auto arr = [&](const char* key) {
        return read_array(blob, {field<std::size_t>(bn, key, i), c}, i, std::string("bn.") + key);
      };
      l.bn = BatchNormParams{arr("gamma"), arr("beta"), arr("mean"), arr("var")};
      break;
    }
    case LayerKind::kSparseLinear: {
      const json& sp = j.contains("sparse") ? j.at("sparse") : json();
      if (!sp.is_object())
        throw format_error(FormatCode::kMalformedManifest, i, "SparseLinear needs 'sparse'");
      CsrMatrix m;
      m.rows = field<std::size_t>(sp, "rows", i);
      m.cols = field<std::size_t>(sp, "cols", i);
      m.row_ptr = field<std::vector<std::size_t>>(sp, "row_ptr", i);
      m.col_idx = field<std::vector<std::size_t>>(sp, "col_idx", i);
      m.values = read_array(blob,
                            {field<std::size_t>(j, "offset_bytes", i), field<std::size_t>(j, "length", i)},
                            i, "sparse values");
      l.sparse = std::move(m);
      break;
    }
    default:
      break;
  }
  return l;
}

}  // namespace

AnnModel load_model(const std::filesystem::path& dir) {
  const std::string text = read_text_file(dir / "model.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw manifest_error(std::string("model.json is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("layers") || !manifest["layers"].is_array())
    throw manifest_error("model.json needs a 'layers' array");

  const BlobType dtype = parse_blob_type(manifest.value("dtype", std::string("f32")));
  const BlobReader blob(read_binary_file(dir / "weights.bin"), dtype);

  AnnModel model;
  try {
    model.name = manifest.value("name", std::string());
    model.input_shape = manifest.at("input_shape").get<Shape>();
    model.num_classes = manifest.value("num_classes", std::size_t{0});
    for (const auto& e : manifest.value("skip_edges", json::array())) {
      if (e.is_array())
        model.skip_edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
      else
        model.skip_edges.push_back({e.at("source").get<std::size_t>(), e.at("merge").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw manifest_error(std::string("bad model header: ") + e.what());
  }
  const auto& layers = manifest["layers"];
  for (std::size_t i = 0; i < layers.size(); ++i) model.layers.push_back(parse_layer(layers[i], blob, i));
  validate(model);
  return model;
}

void save_model(const AnnModel& model, const std::filesystem::path& dir, BlobType dtype) {
  validate(model);
  std::filesystem::create_directories(dir);
  BlobWriter blob(dtype);
  json layers = json::array();
  for (const Layer& l : model.layers) {
    json j = {{"kind", to_string(l.kind)}};
    if (l.weights) j.update(tensor_ref(blob, *l.weights));
    if (l.bias) {
      const BlobRef ref = blob.append(l.bias->values());
      j["bias_offset_bytes"] = ref.offset_bytes;
      j["bias_length"] = ref.length;
    }
    switch (l.kind) {
      case LayerKind::kConv2d:
        j["stride"] = l.geometry.stride;
        j["padding"] = l.geometry.padding;
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        j["kernel"] = l.geometry.kernel;
        j["stride"] = l.geometry.stride;
        break;
      case LayerKind::kBatchNorm:
        j["channels"] = l.bn->channels();
        j["bn"] = {{"gamma", blob.append(l.bn->gamma).offset_bytes},
                   {"beta", blob.append(l.bn->beta).offset_bytes},
                   {"mean", blob.append(l.bn->mean).offset_bytes},
                   {"var", blob.append(l.bn->var).offset_bytes}};
        break;
      case LayerKind::kSparseLinear: {
        const BlobRef ref = blob.append(l.sparse->values);
        j["offset_bytes"] = ref.offset_bytes;
        j["length"] = ref.length;
        j["sparse"] = {{"rows", l.sparse->rows},
                       {"cols", l.sparse->cols},
                       {"row_ptr", l.sparse->row_ptr},
                       {"col_idx", l.sparse->col_idx}};
        break;
      }
      default:
        break;
    }
    if (l.split_sign) j["split_sign"] = true;
    layers.push_back(std::move(j));
  }
  json skips = json::array();
  for (const auto& e : model.skip_edges) skips.push_back({e.source, e.merge});

  json manifest = {{"name", model.name},         {"input_shape", model.input_shape},
                   {"num_classes", model.num_classes}, {"dtype", to_string(dtype)},
                   {"layers", std::move(layers)}, {"skip_edges", std::move(skips)}};
  write_file_atomic(dir / "weights.bin", blob.bytes());
  write_file_atomic(dir / "model.json", manifest.dump(2) + "\n");
}

}  // namespace onespike
