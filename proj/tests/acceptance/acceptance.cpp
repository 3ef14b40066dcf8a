// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "onespike/calibration.hpp"
#include "onespike/dataset.hpp"
#include "onespike/engine.hpp"
#include "onespike/forward.hpp"
#include "onespike/metrics.hpp"
#include "onespike/model_io.hpp"
#include "onespike/phase_codec.hpp"
#include "onespike/snn_kernels.hpp"
#include "onespike/snn_model.hpp"

using namespace onespike;

namespace {

const std::filesystem::path kData = ONESPIKE_TEST_DATA;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::size_t worst_spikes = 0;  // max spikes of any hidden neuron, across every inference below

void report(const std::string& name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs > limit_s) {
    o.pass = false;
    o.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s budget)";
  }
  std::printf("%s %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

BatchResult run_batch(const SnnModel& snn, const std::vector<Tensor>& xs, EngineOptions opt = {},
                      bool keep_logits = false) {
  BatchResult b = evaluate(snn, xs, opt, keep_logits);
  worst_spikes = std::max(worst_spikes, b.max_spikes_per_hidden_neuron);
  return b;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double c = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return c / std::sqrt(va * vb);
}

// Brute-force scan over every phase threshold.
int oracle_phase(double x, double q, int T, Rounding mode) {
  for (int t = 1; t <= T; ++t) {
    const double th = mode == Rounding::kRound ? (std::pow(q, -t) + std::pow(q, -t - 1)) / 2.0 : std::pow(q, -t);
    if (x > th) return t;
  }
  return SpikeCode::kNone;
}

Outcome codec_oracle() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(100000);
  for (double& x : xs) x = u(rng);
  std::size_t checked = 0, mismatches = 0;
  for (double q : {1.2, 1.3, std::sqrt(2.0), 2.0})
    for (int T : {8, 16, 24})
      for (auto mode : {Rounding::kFloor, Rounding::kRound}) {
        const PhaseCodec codec({q, T, mode});
        for (double x : xs) {
          ++checked;
          mismatches += codec.encode(x).phase != oracle_phase(x, q, T, mode);
        }
      }
  return {mismatches == 0, std::to_string(checked) + " encodings, " + std::to_string(mismatches) + " mismatches"};
}

// One neuron, one binary-coded input, w = T: the spike phase must equal the
// round-off code of weight * decoded input.
Outcome engine_codec() {
  const int T = 16;
  std::size_t checked = 0, mismatches = 0;
  for (double q : {1.3, 2.0}) {
    const PhaseCodec codec({q, T, Rounding::kRound});
    SnnLayer l;
    l.kind = SnnKind::kDense;
    l.in_shape = {1};
    l.out_shape = {1};
    l.threshold = {threshold_factor(q, Rounding::kRound)};
    l.v_init = {0.0};
    l.q_prev = 2.0;
    l.q_cur = q;
    for (int i = 0; i < 100; ++i)
      for (int j = 0; j < 100; ++j) {
        const double x = i / 100.0, wt = (j + 1) / 100.0;
        const InputCode code = encode_input(x, T);
        l.weights = Tensor({1, 1}, wt);
        LayerActivity in;
        in.shape = {1};
        in.masks = {code.bits};
        const LayerActivity out = snn_kernels::parallel::run_layer(l, in, nullptr, T, T);
        ++checked;
        mismatches += !(out.code(0) == codec.encode(wt * decode_input(code)));
      }
  }
  return {mismatches == 0, std::to_string(checked) + " grid points, " + std::to_string(mismatches) + " mismatches"};
}

Outcome mape_argmin() {
  const auto grid = make_grid(1.0, 2.0, 0.01);
  const double q16 = optimal_q(16, 0.0, 1.0, grid, 1'000'000);
  const double q24 = optimal_q(24, 0.0, 1.0, grid, 1'000'000);
  const bool ok = q16 >= 1.25 - 1e-9 && q16 <= 1.35 + 1e-9 && q24 >= 1.15 - 1e-9 && q24 <= 1.25 + 1e-9;
  return {ok, "argmin T=16: " + num(q16, 2) + ", T=24: " + num(q24, 2)};
}

Outcome threshold_shift() {
  const AnnModel m = load_model(kData / "deep");
  const auto calib = load_batch(kData / "digits" / "calib_flat.bin");
  const auto test = load_batch(kData / "digits" / "test_flat.bin");
  const NormalizedAnn norm = normalize(m, collect_stats(m, calib));
  std::vector<double> ann;
  for (const auto& x : test) {
    const Tensor logits = predict_logits(m, x);
    ann.insert(ann.end(), logits.values().begin(), logits.values().end());
  }
  double rate[2], r[2];
  for (int shift = 0; shift < 2; ++shift) {
    const SnnModel s = build(norm, 16, 10, BaseSchedule::uniform(1.3), shift == 1);
    const BatchResult b = run_batch(s, test, {}, true);
    std::vector<double> snn;
    for (const auto& l : b.logits)
      for (double v : l.values()) snn.push_back(v);
    const LayerTotals& last = b.layers[b.layers.size() - 2];
    rate[shift] = static_cast<double>(last.spikes) / (static_cast<double>(last.neurons) * static_cast<double>(b.samples));
    r[shift] = pearson(ann, snn);
  }
  const bool fewer = rate[0] < rate[1];
  const bool corr = r[1] - r[0] >= 0.1;
  const std::size_t depth = partition_units(m).size();
  return {fewer && corr, std::to_string(depth) + "-layer net; last hidden firing floor " + num(rate[0]) +
                             " vs round " + num(rate[1]) + (fewer ? " (ok)" : " (floor not lower)") +
                             "; Pearson round " + num(r[1]) + " vs floor " + num(r[0]) + ", gap " +
                             num(r[1] - r[0]) + (corr ? " (ok)" : " (< 0.1)")};
}

// Shared by the CNN criteria.
struct Cnn {
  AnnModel ann;
  SnnModel snn;
  std::vector<Tensor> test;
  std::vector<std::size_t> labels;
  double ann_acc = 0.0;
  std::vector<std::pair<int, double>> sweep;  // (w, accuracy)
};

Cnn& cnn() {
  static Cnn c = [] {
    Cnn c;
    c.ann = load_model(kData / "cnn");
    const auto calib = load_batch(kData / "digits" / "calib.bin");
    c.test = load_batch(kData / "digits" / "test.bin");
    c.labels = load_labels(kData / "digits" / "test_labels.json");
    c.snn = build(normalize(c.ann, collect_stats(c.ann, calib)), 16, 10, BaseSchedule::uniform(1.3));
    std::vector<std::size_t> pred(c.test.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(c.test.size()); ++i)
      pred[static_cast<std::size_t>(i)] = argmax_class(predict_logits(c.ann, c.test[static_cast<std::size_t>(i)]));
    c.ann_acc = accuracy(pred, c.labels);
    return c;
  }();
  return c;
}

double cnn_accuracy(int w, InputCoding coding = InputCoding::kBinary) {
  Cnn& c = cnn();
  if (coding == InputCoding::kBinary)
    for (const auto& [sw, acc] : c.sweep)
      if (sw == w) return acc;
  EngineOptions o;
  o.wait = w;
  o.coding = coding;
  const double acc = accuracy(run_batch(c.snn, c.test, o).predictions, c.labels);
  if (coding == InputCoding::kBinary) c.sweep.emplace_back(w, acc);
  return acc;
}

Outcome conversion_loss() {
  const Cnn& c = cnn();
  const double snn = cnn_accuracy(10);
  const double loss = 100.0 * (c.ann_acc - snn);
  return {loss <= 1.0, "ANN " + num(100 * c.ann_acc, 1) + "%, SNN " + num(100 * snn, 1) + "% (Q=1.3, T=16, w=10, " +
                           std::to_string(c.test.size()) + " samples), loss " + num(loss, 2) + " points"};
}

Outcome w_sweep() {
  std::string detail;
  double best = 0.0;
  for (int w = 0; w <= 16; w += 2) {
    const double a = cnn_accuracy(w);
    best = std::max(best, a);
    detail += "w=" + std::to_string(w) + ":" + num(100 * a, 1) + " ";
  }
  const double at_t = cnn_accuracy(16), at_0 = cnn_accuracy(0);
  return {100 * (best - at_t) <= 0.5 && at_0 < at_t, detail + "| max " + num(100 * best, 1)};
}

Outcome single_spike_input() {
  const Cnn& c = cnn();
  const double binary = cnn_accuracy(10);
  const double single = cnn_accuracy(10, InputCoding::kSingleSpike);
  // The batch path must agree with the per-image entry point.
  for (std::size_t i = 0; i < 50; ++i) {
    EngineOptions o;
    o.coding = InputCoding::kSingleSpike;
    if (infer_single_spike_input(c.snn, c.test[i]) != infer(c.snn, c.test[i], o).predicted)
      return {false, "infer_single_spike_input disagrees with the batch path at sample " + std::to_string(i)};
  }
  const double gap = 100 * (binary - single);
  return {single <= binary && gap >= 2.0,
          "binary " + num(100 * binary, 1) + "%, single-spike " + num(100 * single, 1) + "%, gap " + num(gap, 2) +
              " points"};
}

Outcome single_spike_invariant() {
  // Every batch above went through infer(), which also throws on a violation.
  return {worst_spikes <= 1, "max spikes of any hidden neuron over all runs: " + std::to_string(worst_spikes)};
}

Outcome energy() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> d(1, 1'000'000);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<std::size_t> ops{d(rng), d(rng), d(rng)}, adds{d(rng), d(rng), d(rng)};
    for (const auto& e : {EnergyModel::fp32(), EnergyModel::int8()}) {
      const double a = alpha(ops, adds, e);
      const double lhs = a * e.e_add * static_cast<double>(adds[0] + adds[1] + adds[2]);
      const double rhs = e.e_mac * static_cast<double>(ops[0] + ops[1] + ops[2]);
      worst = std::max(worst, std::abs(lhs - rhs) / rhs);
    }
  }
  // All-fire case: every input spikes once and every synapse is accumulated.
  SnnLayer l;
  l.kind = SnnKind::kDense;
  l.in_shape = {64};
  l.out_shape = {32};
  l.weights = Tensor({32, 64}, 0.01);
  l.threshold.assign(32, 10.0);
  l.v_init.assign(32, 0.0);
  l.q_prev = l.q_cur = 1.3;
  LayerActivity in;
  in.shape = {64};
  in.base = 1.3;
  in.masks.assign(64, 1u);
  const LayerActivity out = snn_kernels::parallel::run_layer(l, in, nullptr, 16, 16);
  const std::vector<std::size_t> ops{64 * 32}, adds{out.additions};
  const double fp32 = alpha(ops, adds, EnergyModel::fp32()), int8 = alpha(ops, adds, EnergyModel::int8());
  const bool ok = worst <= 1e-9 && out.additions == 64 * 32 && std::abs(fp32 - 4.6 / 0.9) <= 1e-12 &&
                  std::abs(int8 - 0.2 / 0.03) <= 1e-12;
  return {ok, "identity max rel err " + num(worst * 1e15, 2) + "e-15; all-fire alpha FP32 " + num(fp32, 4) +
                  ", INT8 " + num(int8, 4)};
}

Outcome latency_model() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::uint64_t> d(1, 100000);
  bool exact = true;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t n = d(rng), t = d(rng) % 64 + 1, w = d(rng) % (t + 1), nl = d(rng) % 50 + 1;
    exact = exact && latency(n, t, w, nl) == n * (t + w) + w * (nl - 1);
  }
  // Steady state: each further image costs T + w phases.
  const std::uint64_t step = latency(1001, 24, 16, 16) - latency(1000, 24, 16, 16);
  return {exact && step == 40, std::string(exact ? "100/100 tuples exact" : "tuple mismatch") +
                                   "; steady-state per-image latency " + std::to_string(step)};
}

}  // namespace

int main() {
  report("codec_oracle", 10, codec_oracle);
  report("engine_codec_equivalence", 30, engine_codec);
  report("mape_argmin", 60, mape_argmin);
  report("threshold_shift_ablation", 120, threshold_shift);
  report("conversion_loss", 300, conversion_loss);
  report("w_sweep", 600, w_sweep);
  report("single_spike_input_ablation", 0, single_spike_input);
  report("single_spike_invariant", 0, single_spike_invariant);
  report("energy_model", 1, energy);
  report("latency_model", 1, latency_model);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
