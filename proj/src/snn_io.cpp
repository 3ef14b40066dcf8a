#include <json.hpp>

#include "onespike/errors.hpp"
#include "onespike/io.hpp"
#include "onespike/snn_model.hpp"

namespace onespike {
namespace {

using nlohmann::json;

std::filesystem::path blob_path(const std::filesystem::path& json_path) {
  auto p = json_path;
  return p.replace_extension(".bin");
}

json array_ref(BlobWriter& blob, std::span<const double> values) {
  const BlobRef ref = blob.append(values);
  return {{"offset_bytes", ref.offset_bytes}, {"length", ref.length}};
}

std::vector<double> read_ref(const BlobReader& blob, const json& j, std::size_t layer,
                             const std::string& what) {
  BlobRef ref;
  try {
    ref = {j.at("offset_bytes").get<std::size_t>(), j.at("length").get<std::size_t>()};
  } catch (const json::exception& e) {
    throw format_error(FormatCode::kMalformedManifest, layer, "bad " + what + " reference: " + e.what());
  }
  std::vector<double> out;
  if (!blob.read(ref, out))
    throw format_error(FormatCode::kShapeMismatch, layer, what + " exceeds the SNN blob");
  return out;
}

}  // namespace

void save_snn(const SnnModel& snn, const std::filesystem::path& json_path) {
  snn.validate();
  BlobWriter blob(BlobType::kF64);
  json layers = json::array();
  for (const SnnLayer& l : snn.layers) {
    json j = {{"kind", to_string(l.kind)},
              {"in_shape", l.in_shape},
              {"out_shape", l.out_shape},
              {"q_prev", l.q_prev},
              {"q_cur", l.q_cur},
              {"fires", l.fires},
              {"ann_first", l.ann_first},
              {"ann_last", l.ann_last},
              {"op_ann", l.op_ann}};
    if (l.kind == SnnKind::kConv || l.kind == SnnKind::kMaxPool)
      j["geometry"] = {{"kernel", l.geometry.kernel},
                       {"stride", l.geometry.stride},
                       {"padding", l.geometry.padding}};
    if (l.kind == SnnKind::kConv) j["groups"] = l.groups;
    if (l.kind == SnnKind::kConv || l.kind == SnnKind::kDense) {
      j["weights"] = array_ref(blob, l.weights.values());
      j["weights"]["shape"] = l.weights.shape();
    }
    if (l.split_sign) j["split_sign"] = true;
    if (l.sparse)
      j["sparse"] = {{"rows", l.sparse->rows},
                     {"cols", l.sparse->cols},
                     {"row_ptr", l.sparse->row_ptr},
                     {"col_idx", l.sparse->col_idx},
                     {"values", array_ref(blob, l.sparse->values)}};
    if (l.kind != SnnKind::kMaxPool) {
      j["threshold"] = array_ref(blob, l.threshold);
      j["v_init"] = array_ref(blob, l.v_init);
    }
    if (l.skip_source) {
      j["skip_source"] = *l.skip_source;
      j["skip_weight"] = l.skip_weight;
    }
    if (l.quant)
      j["quant"] = {{"bits", l.quant->bits}, {"scale", l.quant->scale}, {"all_zero", l.quant->all_zero}};
    layers.push_back(std::move(j));
  }
  json manifest = {{"name", snn.name},
                   {"input_shape", snn.input_shape},
                   {"num_classes", snn.num_classes},
                   {"T", snn.timestep},
                   {"w", snn.wait},
                   {"q_in", snn.schedule.q_in},
                   {"q_hidden", snn.schedule.q_hidden},
                   {"threshold_shift", snn.threshold_shift},
                   {"input_scale", snn.input_scale},
                   {"output_scale", snn.output_scale},
                   {"dtype", "f64"},
                   {"blob", blob_path(json_path).filename().string()},
                   {"layers", std::move(layers)}};
  write_file_atomic(blob_path(json_path), blob.bytes());
  write_file_atomic(json_path, manifest.dump(2) + "\n");
}

SnnModel load_snn(const std::filesystem::path& json_path) {
  json m;
  try {
    m = json::parse(read_text_file(json_path));
  } catch (const json::parse_error& e) {
    throw manifest_error(json_path.string() + " is not valid JSON: " + e.what());
  }
  SnnModel snn;
  try {
    const auto blob_name = m.value("blob", blob_path(json_path).filename().string());
    const BlobReader blob(read_binary_file(json_path.parent_path() / blob_name),
                          parse_blob_type(m.value("dtype", std::string("f64"))));
    snn.name = m.value("name", std::string());
    snn.input_shape = m.at("input_shape").get<Shape>();
    snn.num_classes = m.at("num_classes").get<std::size_t>();
    snn.timestep = m.at("T").get<int>();
    snn.wait = m.at("w").get<int>();
    snn.schedule.q_in = m.value("q_in", 2.0);
    snn.schedule.q_hidden = m.at("q_hidden").get<std::vector<double>>();
    snn.threshold_shift = m.value("threshold_shift", true);
    snn.input_scale = m.at("input_scale").get<double>();
    snn.output_scale = m.at("output_scale").get<double>();

    const json& layers = m.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const json& j = layers[i];
      SnnLayer l;
      const auto kind_name = j.at("kind").get<std::string>();
      const auto kind = parse_snn_kind(kind_name);
      if (!kind)
        throw format_error(FormatCode::kUnsupportedKind, i, "unknown SNN layer kind '" + kind_name + "'");
      l.kind = *kind;
      l.in_shape = j.at("in_shape").get<Shape>();
      l.out_shape = j.at("out_shape").get<Shape>();
      l.q_prev = j.at("q_prev").get<double>();
      l.q_cur = j.at("q_cur").get<double>();
      l.fires = j.at("fires").get<bool>();
      l.ann_first = j.value("ann_first", std::size_t{0});
      l.ann_last = j.value("ann_last", std::size_t{0});
      l.op_ann = j.value("op_ann", std::size_t{0});
      if (j.contains("geometry")) {
        const json& g = j["geometry"];
        l.geometry = {g.at("kernel").get<std::size_t>(), g.at("stride").get<std::size_t>(),
                      g.at("padding").get<std::size_t>()};
      }
      l.groups = j.value("groups", std::size_t{1});
      if (j.contains("weights")) {
        Shape shape = j["weights"].at("shape").get<Shape>();
        auto values = read_ref(blob, j["weights"], i, "weights");
        if (element_count(shape) != values.size())
          throw format_error(FormatCode::kShapeMismatch, i, "weight shape disagrees with length");
        l.weights = Tensor(std::move(shape), std::move(values));
      }
      l.split_sign = j.value("split_sign", false);
      if (j.contains("sparse")) {
        const json& sp = j["sparse"];
        CsrMatrix a;
        a.rows = sp.at("rows").get<std::size_t>();
        a.cols = sp.at("cols").get<std::size_t>();
        a.row_ptr = sp.at("row_ptr").get<std::vector<std::size_t>>();
        a.col_idx = sp.at("col_idx").get<std::vector<std::size_t>>();
        a.values = read_ref(blob, sp.at("values"), i, "sparse values");
        if (a.row_ptr.size() != a.rows + 1 || a.col_idx.size() != a.values.size() ||
            a.row_ptr.back() != a.values.size())
          throw format_error(FormatCode::kShapeMismatch, i, "inconsistent CSR arrays");
        for (std::size_t c : a.col_idx)
          if (c >= a.cols) throw format_error(FormatCode::kShapeMismatch, i, "column index out of range");
        l.sparse = std::move(a);
      }
      if (j.contains("threshold")) l.threshold = read_ref(blob, j["threshold"], i, "threshold");
      if (j.contains("v_init")) l.v_init = read_ref(blob, j["v_init"], i, "v_init");
      if (j.contains("skip_source")) {
        l.skip_source = j["skip_source"].get<std::size_t>();
        l.skip_weight = j.at("skip_weight").get<std::vector<double>>();
      }
      if (j.contains("quant")) {
        const json& q = j["quant"];
        l.quant = QuantInfo{q.at("bits").get<int>(), q.at("scale").get<double>(),
                            q.at("all_zero").get<bool>()};
      }
      snn.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw manifest_error("malformed SNN manifest: " + std::string(e.what()));
  }
  snn.validate();
  return snn;
}

}  // namespace onespike
