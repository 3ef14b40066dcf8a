#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "onespike/calibration.hpp"
#include "onespike/dataset.hpp"
#include "onespike/model_io.hpp"
#include "onespike/tensor.hpp"

namespace onespike::testing {

inline std::filesystem::path data_dir() { return ONESPIKE_TEST_DATA; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("onespike_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

/// An exported fixture model, calibrated on the shared calibration batch.
struct Pipeline {
  AnnModel ann;
  NormalizedAnn norm;
  std::vector<Tensor> test;
  std::vector<std::size_t> labels;
};

/// `name` is a directory under tests/data; the MLP-style models take the flat batches.
/// Loaded once per process.
inline const Pipeline& pipeline(const std::string& name) {
  static std::map<std::string, Pipeline> cache;
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  const std::string suffix = name == "cnn" ? "" : "_flat";
  Pipeline p;
  p.ann = load_model(data_dir() / name);
  const auto calib = load_batch(data_dir() / "digits" / ("calib" + suffix + ".bin"));
  p.norm = normalize(p.ann, collect_stats(p.ann, calib));
  p.test = load_batch(data_dir() / "digits" / ("test" + suffix + ".bin"));
  p.labels = load_labels(data_dir() / "digits" / "test_labels.json");
  return cache.emplace(name, std::move(p)).first->second;
}

}  // namespace onespike::testing
