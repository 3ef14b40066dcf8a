#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace onespike {

enum class BlobType { kF32, kF64 };

std::string_view to_string(BlobType t);
BlobType parse_blob_type(std::string_view name);
std::size_t element_bytes(BlobType t);

/// Location of an array inside a blob.
struct BlobRef {
  std::size_t offset_bytes = 0;
  std::size_t length = 0;
};

/// Appends little-endian IEEE-754 arrays to an in-memory blob.
class BlobWriter {
 public:
  explicit BlobWriter(BlobType type = BlobType::kF32) : type_(type) {}
  BlobRef append(std::span<const double> values);
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  BlobType type() const noexcept { return type_; }

 private:
  BlobType type_;
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reads from a loaded blob. Out-of-range reads return false.
class BlobReader {
 public:
  BlobReader(std::vector<std::uint8_t> bytes, BlobType type)
      : bytes_(std::move(bytes)), type_(type) {}
  bool read(const BlobRef& ref, std::vector<double>& out) const;
  std::size_t size_bytes() const noexcept { return bytes_.size(); }

 private:
  std::vector<std::uint8_t> bytes_;
  BlobType type_;
};

/// Throws Error(kIo) when the file is missing or unreadable.
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a temporary sibling then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace onespike
