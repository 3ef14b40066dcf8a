#include "onespike/dataset.hpp"

#include <cmath>
#include <json.hpp>

#include "onespike/errors.hpp"
#include "onespike/io.hpp"

namespace onespike {
namespace {

using nlohmann::json;

std::filesystem::path sidecar(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  return p.replace_extension(".json");
}

}  // namespace

std::vector<Tensor> load_batch(const std::filesystem::path& bin_path) {
  std::size_t count = 0;
  Shape shape;
  BlobType dtype = BlobType::kF32;
  try {
    const json j = json::parse(read_text_file(sidecar(bin_path)));
    count = j.at("count").get<std::size_t>();
    shape = j.at("shape").get<Shape>();
    dtype = parse_blob_type(j.value("dtype", std::string("f32")));
  } catch (const json::exception& e) {
    throw manifest_error("malformed batch sidecar " + sidecar(bin_path).string() + ": " + e.what());
  }
  if (count == 0) throw validation_error("empty dataset");
  const std::size_t per = element_count(shape);
  if (per == 0) throw manifest_error("batch sample shape " + shape_string(shape) + " is empty");

  const BlobReader blob(read_binary_file(bin_path), dtype);
  if (blob.size_bytes() != count * per * element_bytes(dtype))
    throw manifest_error(bin_path.string() + " holds " + std::to_string(blob.size_bytes()) +
                         " bytes, sidecar implies " + std::to_string(count * per * element_bytes(dtype)));
  std::vector<Tensor> batch;
  batch.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> v;
    blob.read({k * per * element_bytes(dtype), per}, v);
    for (double x : v)
      if (!std::isfinite(x)) throw Error(ErrorKind::kFormat, "non-finite value in sample " + std::to_string(k),
                                         std::nullopt, FormatCode::kNonFinite);
    batch.emplace_back(shape, std::move(v));
  }
  return batch;
}

void save_batch(std::span<const Tensor> batch, const std::filesystem::path& bin_path) {
  if (batch.empty()) throw validation_error("empty dataset");
  BlobWriter blob(BlobType::kF32);
  for (const Tensor& t : batch) {
    if (t.shape() != batch.front().shape()) throw validation_error("batch samples differ in shape");
    blob.append(t.values());
  }
  const json j = {{"count", batch.size()}, {"shape", batch.front().shape()}, {"dtype", "f32"}};
  write_file_atomic(bin_path, blob.bytes());
  write_file_atomic(sidecar(bin_path), j.dump() + "\n");
}

std::vector<std::size_t> load_labels(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_text_file(path));
    if (!j.is_array()) throw manifest_error("labels file " + path.string() + " must be a JSON array");
    std::vector<std::size_t> labels;
    labels.reserve(j.size());
    for (const auto& v : j) {
      if (!v.is_number_unsigned())
        throw manifest_error("labels file " + path.string() + ": " + v.dump() + " is not a class index");
      labels.push_back(v.get<std::size_t>());
    }
    return labels;
  } catch (const json::exception& e) {
    throw manifest_error("labels file " + path.string() + " must be a JSON array of class indices: " +
                         e.what());
  }
}

void save_labels(std::span<const std::size_t> labels, const std::filesystem::path& path) {
  write_file_atomic(path, json(std::vector<std::size_t>(labels.begin(), labels.end())).dump() + "\n");
}

}  // namespace onespike
