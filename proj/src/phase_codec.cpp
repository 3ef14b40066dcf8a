#include "onespike/phase_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "onespike/errors.hpp"

namespace onespike {

void CodecConfig::validate() const {
  if (!(base > 1.0 && base <= 2.0))
    throw validation_error("base Q must lie in (1, 2], got " + std::to_string(base));
  if (timestep < 1 || timestep > kMaxTimestep)
    throw validation_error("timestep T must lie in [1, " + std::to_string(kMaxTimestep) +
                           "], got " + std::to_string(timestep));
}

std::string InputCode::to_string() const {
  std::string s(static_cast<std::size_t>(timestep), '0');
  for (int t = 1; t <= timestep; ++t)
    if ((bits >> (t - 1)) & 1u) s[static_cast<std::size_t>(t - 1)] = '1';
  return s;
}

double threshold_factor(double base, Rounding mode) {
  return mode == Rounding::kRound ? (base + 1.0) / (2.0 * base) : 1.0;
}

std::vector<double> phase_weights(double base, int timestep) {
  std::vector<double> w(static_cast<std::size_t>(timestep) + 1, 1.0);
  for (int t = 1; t <= timestep; ++t) w[static_cast<std::size_t>(t)] = std::pow(base, -t);
  return w;
}

PhaseCodec::PhaseCodec(CodecConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  log_base_ = std::log(cfg_.base);
  values_ = phase_weights(cfg_.base, cfg_.timestep);
  const double factor = threshold_factor(cfg_.base, cfg_.mode);
  thresholds_.resize(values_.size());
  for (std::size_t t = 0; t < values_.size(); ++t) thresholds_[t] = factor * values_[t];
}

SpikeCode PhaseCodec::encode_unchecked(double x) const {
  const int T = cfg_.timestep;
  if (!(x > threshold(T))) return {};
  // Closed-form guess, then settle on the exact table comparison.
  const double guess = std::floor(std::log(threshold(0) / x) / log_base_) + 1.0;
  int t = static_cast<int>(std::clamp(guess, 1.0, static_cast<double>(T)));
  while (t > 1 && x > threshold(t - 1)) --t;
  while (!(x > threshold(t))) ++t;
  return {t};
}

SpikeCode PhaseCodec::encode(double x) const {
  if (!(x >= 0.0 && x < 1.0))
    throw validation_error("encoded value must lie in [0, 1), got " + std::to_string(x));
  return encode_unchecked(x);
}

double PhaseCodec::decode(SpikeCode code) const {
  return code.fired() ? value(code.phase) : 0.0;
}

SpikeCode encode_floor(double x, const CodecConfig& cfg) {
  CodecConfig c = cfg;
  c.mode = Rounding::kFloor;
  return PhaseCodec(c).encode(x);
}

SpikeCode encode_round(double x, const CodecConfig& cfg) {
  CodecConfig c = cfg;
  c.mode = Rounding::kRound;
  return PhaseCodec(c).encode(x);
}

double decode(SpikeCode code, const CodecConfig& cfg) {
  cfg.validate();
  if (!code.fired()) return 0.0;
  if (code.phase < 1 || code.phase > cfg.timestep)
    throw validation_error("phase " + std::to_string(code.phase) + " outside 1.." +
                           std::to_string(cfg.timestep));
  return std::pow(cfg.base, -code.phase);
}

InputCode encode_input(double x, int timestep) {
  if (timestep < 1 || timestep > kMaxTimestep)
    throw validation_error("timestep T must lie in [1, " + std::to_string(kMaxTimestep) + "]");
  if (!(x >= 0.0 && x <= 1.0))
    throw validation_error("input value must lie in [0, 1], got " + std::to_string(x));
  const std::uint64_t levels = std::uint64_t{1} << timestep;
  // x * 2^T is exact; truncation keeps the code at or below x.
  const auto scaled = static_cast<std::uint64_t>(std::floor(std::ldexp(x, timestep)));
  const std::uint64_t v = std::min(scaled, levels - 1);
  InputCode code{0, timestep};
  for (int t = 1; t <= timestep; ++t)
    if ((v >> (timestep - t)) & 1u) code.bits |= std::uint64_t{1} << (t - 1);
  return code;
}

double decode_input(InputCode code) {
  double sum = 0.0;
  for (int t = 1; t <= code.timestep; ++t)
    if ((code.bits >> (t - 1)) & 1u) sum += std::ldexp(1.0, -t);
  return sum;
}

namespace {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 2) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

double mape(double base, int timestep, double mu, double sigma, std::size_t intervals) {
  if (!(sigma > 0.0)) throw validation_error("sigma must be positive");
  if (intervals < 1) throw validation_error("quadrature needs at least one interval");
  const bool degenerate = base == 1.0;
  std::optional<PhaseCodec> codec;
  if (!degenerate) codec.emplace(CodecConfig{base, timestep, Rounding::kRound});

  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  auto integrand = [&](std::size_t i) {
    const double x = static_cast<double>(i) / static_cast<double>(intervals);
    const double z = (x - mu) / sigma;
    const double density = norm * std::exp(-0.5 * z * z);
    if (x == 0.0 || degenerate) return density;
    return std::abs(x - codec->quantize(x)) / x * density;
  };

  constexpr std::size_t kChunk = 4096;
  const std::size_t points = intervals + 1;
  const std::size_t chunks = (points + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);

#pragma omp parallel for schedule(static)
  for (long c = 0; c < static_cast<long>(chunks); ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(points, begin + kChunk);
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double w = (i == 0 || i == intervals) ? 0.5 : 1.0;
      s += w * integrand(i);
    }
    partial[static_cast<std::size_t>(c)] = s;
  }
  return pairwise_sum(partial) / static_cast<double>(intervals);
}

double optimal_q(int timestep, double mu, double sigma, std::span<const double> grid,
                 std::size_t intervals) {
  if (grid.empty()) throw validation_error("optimal_q needs a non-empty grid");
  double best_q = grid[0];
  double best = mape(grid[0], timestep, mu, sigma, intervals);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double m = mape(grid[i], timestep, mu, sigma, intervals);
    if (m < best || (m == best && grid[i] < best_q)) {
      best = m;
      best_q = grid[i];
    }
  }
  return best_q;
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo))
    throw validation_error("grid needs lo <= hi and step > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t k = 0; k < n; ++k)
    grid[k] = std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12;
  return grid;
}

}  // namespace onespike
