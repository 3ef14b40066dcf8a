#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "onespike/tensor.hpp"

namespace onespike {

/// A batch blob `name.bin` (little-endian f32, samples back to back) with its
/// sidecar `name.json` {"count": N, "shape": [...]}.
std::vector<Tensor> load_batch(const std::filesystem::path& bin_path);
void save_batch(std::span<const Tensor> batch, const std::filesystem::path& bin_path);

/// JSON array of non-negative class indices.
std::vector<std::size_t> load_labels(const std::filesystem::path& path);
void save_labels(std::span<const std::size_t> labels, const std::filesystem::path& path);

}  // namespace onespike
