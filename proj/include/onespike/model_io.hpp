#pragma once

#include <filesystem>

#include "onespike/io.hpp"
#include "onespike/model.hpp"

namespace onespike {

/// Loads `model.json` + `weights.bin` from `dir` and validates the result.
/// Manifest problems throw Error(kFormat) with a FormatCode and layer index.
AnnModel load_model(const std::filesystem::path& dir);

/// Writes `model.json` + `weights.bin` into `dir` (created if needed).
void save_model(const AnnModel& model, const std::filesystem::path& dir,
                BlobType dtype = BlobType::kF32);

}  // namespace onespike
