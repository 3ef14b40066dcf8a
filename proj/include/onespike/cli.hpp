#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace onespike::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kIoOrFormat = 2,
  kNumeric = 3,
};

struct CalibrateConfig {
  std::string model;
  std::string data;
  double percentile = 1.0;
  std::string out = "stats.json";
};

struct ConvertConfig {
  std::string model;
  std::string stats;
  int timestep = 16;
  std::string q = "1.3";  // a number or "auto"
  int wait = 16;
  bool int8 = false;
  bool no_shift = false;
  double mu = 0.0;     // Gaussian used by --q auto
  double sigma = 1.0;
  std::string out = "snn.json";
};

struct RunConfig {
  std::string snn;
  std::string data;
  std::string labels;
  std::optional<int> wait;
  bool single_spike_input = false;
  bool reference_kernels = false;
  std::string report = "report.csv";
};

struct SweepQConfig {
  int timestep = 16;
  double mu = 0.0;
  double sigma = 1.0;
  std::string grid = "1.00:2.00:0.01";
  std::size_t intervals = 1'000'000;
  // Optional accuracy columns: all four must be given together.
  std::string model, stats, data, labels;
  int wait = 16;
  bool int8 = false;
  bool no_shift = false;
  std::string out;  // stdout when empty
};

struct SweepWConfig {
  std::string snn;
  std::string data;
  std::string labels;
  std::string grid;  // default 0:T:2
  std::string out;
};

struct CompareConfig {
  std::string model;
  std::string snn;
  std::string data;
  std::string labels;
  std::optional<int> wait;
  std::string out;
};

// Each command prints a short summary to `out` and returns an ExitCode.
// Library errors propagate as onespike::Error.
int cmd_calibrate(const CalibrateConfig& cfg, std::uint64_t seed, std::ostream& out);
int cmd_convert(const ConvertConfig& cfg, std::uint64_t seed, std::ostream& out);
int cmd_run(const RunConfig& cfg, std::uint64_t seed, std::ostream& out);
int cmd_sweep_q(const SweepQConfig& cfg, std::uint64_t seed, std::ostream& out);
int cmd_sweep_w(const SweepWConfig& cfg, std::uint64_t seed, std::ostream& out);
int cmd_compare(const CompareConfig& cfg, std::uint64_t seed, std::ostream& out);

/// Parses `args` (without the program name), dispatches, and maps errors to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "lo:hi:step" into a real grid.
std::vector<double> parse_grid(const std::string& spec);

}  // namespace onespike::cli
