#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace onespike {

/// Failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
  kValidation,  // bad configuration or precondition (exit 1)
  kIo,          // missing/unreadable/unwritable file (exit 2)
  kFormat,      // malformed manifest or blob (exit 2)
  kNumeric,     // non-finite value, zero denominator (exit 3)
};

/// Distinct model-format failures, reported with the offending layer.
enum class FormatCode {
  kNone,
  kMalformedManifest,
  kShapeMismatch,
  kNonFinite,
  kUnsupportedKind,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> layer = std::nullopt,
        FormatCode code = FormatCode::kNone)
      : std::runtime_error(message), kind_(kind), layer_(layer), code_(code) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> layer_index() const noexcept { return layer_; }
  FormatCode code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> layer_;
  FormatCode code_;
};

inline Error validation_error(const std::string& msg) {
  return Error(ErrorKind::kValidation, msg);
}
inline Error io_error(const std::string& msg) { return Error(ErrorKind::kIo, msg); }
inline Error numeric_error(const std::string& msg,
                           std::optional<std::size_t> layer = std::nullopt) {
  return Error(ErrorKind::kNumeric, msg, layer);
}
inline Error format_error(FormatCode code, std::size_t layer, const std::string& msg) {
  return Error(ErrorKind::kFormat, "layer " + std::to_string(layer) + ": " + msg, layer,
               code);
}
inline Error manifest_error(const std::string& msg) {
  return Error(ErrorKind::kFormat, msg, std::nullopt, FormatCode::kMalformedManifest);
}

}  // namespace onespike
