#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace onespike {

/// Longest supported phase window; spike trains are stored as 64-bit masks.
inline constexpr int kMaxTimestep = 63;

enum class Rounding {
  kFloor,  // unshifted threshold: fire once the value clears Q^-t
  kRound,  // threshold shifted to the midpoint between Q^-t and Q^-(t+1)
};

struct CodecConfig {
  double base = 2.0;  // Q, in (1, 2]
  int timestep = 16;  // T
  Rounding mode = Rounding::kRound;

  /// Throws Error(kValidation) unless 1 < base <= 2 and 1 <= timestep <= kMaxTimestep.
  void validate() const;
};

/// Single spike at `phase` in 1..T, or no spike (phase 0).
struct SpikeCode {
  static constexpr int kNone = 0;
  int phase = kNone;

  bool fired() const noexcept { return phase != kNone; }
  friend bool operator==(const SpikeCode&, const SpikeCode&) = default;
};

/// Multi-spike binary input code. Bit (t-1) set means a spike at phase t, worth 2^-t.
struct InputCode {
  std::uint64_t bits = 0;
  int timestep = 0;

  /// Phase 1 first, e.g. "1010".
  std::string to_string() const;
  friend bool operator==(const InputCode&, const InputCode&) = default;
};

/// Fraction of the threshold relative to the phase value: (Q+1)/(2Q) when
/// shifted, 1 otherwise.
double threshold_factor(double base, Rounding mode);

/// Q^-t for t = 1..T, stored at index t (index 0 unused, set to 1).
std::vector<double> phase_weights(double base, int timestep);

/// Precomputed single-spike encoder/decoder for one (Q, T, mode).
///
/// A value x fires at the smallest phase t with x > threshold(t), where
/// threshold(t) = threshold_factor * Q^-t. The comparison is strict, matching the
/// neuron's firing rule, so values exactly on a threshold take the later phase.
class PhaseCodec {
 public:
  explicit PhaseCodec(CodecConfig cfg);

  const CodecConfig& config() const noexcept { return cfg_; }
  double threshold(int phase) const { return thresholds_[static_cast<std::size_t>(phase)]; }
  double value(int phase) const { return values_[static_cast<std::size_t>(phase)]; }

  /// Requires 0 <= x < 1.
  SpikeCode encode(double x) const;
  /// Same rule without the range check; any finite x (x >= 1 fires at phase 1).
  SpikeCode encode_unchecked(double x) const;
  double decode(SpikeCode code) const;
  /// decode(encode_unchecked(x)).
  double quantize(double x) const { return decode(encode_unchecked(x)); }

 private:
  CodecConfig cfg_;
  double log_base_;
  std::vector<double> values_;
  std::vector<double> thresholds_;
};

SpikeCode encode_floor(double x, const CodecConfig& cfg);
SpikeCode encode_round(double x, const CodecConfig& cfg);
double decode(SpikeCode code, const CodecConfig& cfg);

/// Truncated T-bit binary expansion of min(x, 1 - 2^-T). Requires 0 <= x <= 1.
InputCode encode_input(double x, int timestep);
double decode_input(InputCode code);

/// Mean absolute percentage error of round-off single-spike encoding for
/// activations with a Gaussian(mu, sigma) density over [0, 1], untruncated and
/// unnormalized. Composite trapezoid on `intervals` uniform intervals; at x = 0
/// the integrand takes its limit f(0). base == 1 is accepted as the degenerate
/// limit where every value underflows.
double mape(double base, int timestep, double mu, double sigma,
            std::size_t intervals = 1'000'000);

/// Grid argmin of mape(); ties go to the smaller Q. Grid must be non-empty.
double optimal_q(int timestep, double mu, double sigma, std::span<const double> grid,
                 std::size_t intervals = 1'000'000);

/// lo, lo+step, ... up to hi inclusive (within half a step).
std::vector<double> make_grid(double lo, double hi, double step);

}  // namespace onespike
