#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "onespike/errors.hpp"
#include "onespike/io.hpp"

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

namespace onespike {

std::string_view to_string(BlobType t) { return t == BlobType::kF32 ? "f32" : "f64"; }

BlobType parse_blob_type(std::string_view name) {
  if (name == "f32") return BlobType::kF32;
  if (name == "f64") return BlobType::kF64;
  throw manifest_error("unknown dtype '" + std::string(name) + "'");
}

std::size_t element_bytes(BlobType t) { return t == BlobType::kF32 ? 4 : 8; }

BlobRef BlobWriter::append(std::span<const double> values) {
  BlobRef ref{bytes_.size(), values.size()};
  const std::size_t eb = element_bytes(type_);
  bytes_.resize(bytes_.size() + values.size() * eb);
  std::uint8_t* dst = bytes_.data() + ref.offset_bytes;
  for (double v : values) {
    if (type_ == BlobType::kF32) {
      const float f = static_cast<float>(v);
      std::memcpy(dst, &f, 4);
    } else {
      std::memcpy(dst, &v, 8);
    }
    dst += eb;
  }
  return ref;
}

bool BlobReader::read(const BlobRef& ref, std::vector<double>& out) const {
  const std::size_t eb = element_bytes(type_);
  if (ref.offset_bytes % eb != 0) return false;
  if (ref.offset_bytes > bytes_.size() || ref.length > (bytes_.size() - ref.offset_bytes) / eb)
    return false;
  out.resize(ref.length);
  const std::uint8_t* src = bytes_.data() + ref.offset_bytes;
  for (std::size_t i = 0; i < ref.length; ++i, src += eb) {
    if (type_ == BlobType::kF32) {
      float f;
      std::memcpy(&f, src, 4);
      out[i] = f;
    } else {
      std::memcpy(&out[i], src, 8);
    }
  }
  return true;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("cannot rename '" + tmp.string() + "': " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace onespike
