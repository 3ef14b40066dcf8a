#include <CLI11.hpp>
#include <cmath>
#include <iostream>
#include <sstream>

#include "onespike/calibration.hpp"
#include "onespike/cli.hpp"
#include "onespike/dataset.hpp"
#include "onespike/engine.hpp"
#include "onespike/errors.hpp"
#include "onespike/forward.hpp"
#include "onespike/io.hpp"
#include "onespike/metrics.hpp"
#include "onespike/model_io.hpp"
#include "onespike/phase_codec.hpp"
#include "onespike/snn_model.hpp"

namespace onespike::cli {
namespace {

void require_field(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw validation_error(field + ": " + msg);
}

void check_timestep(int t, const std::string& field = "--t") {
  require_field(t >= 1 && t <= kMaxTimestep, field,
                "must lie in [1, " + std::to_string(kMaxTimestep) + "], got " + std::to_string(t));
}

void check_wait(int w, int t, const std::string& field = "--w") {
  require_field(w >= 0 && w <= t, field,
                "must lie in [0, T=" + std::to_string(t) + "], got " + std::to_string(w));
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file_atomic(path, text);
    out << "wrote " << path << "\n";
  }
}

std::vector<std::size_t> checked_labels(const std::string& path, std::size_t samples) {
  auto labels = load_labels(path);
  if (labels.size() != samples)
    throw validation_error("--labels: " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(samples) + " samples");
  return labels;
}

}  // namespace

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw validation_error("--grid: '" + spec + "' is not lo:hi:step");
    }
  }
  if (parts.size() == 1) return {parts[0]};
  if (parts.size() != 3) throw validation_error("--grid: '" + spec + "' is not lo:hi:step");
  return make_grid(parts[0], parts[1], parts[2]);
}

int cmd_calibrate(const CalibrateConfig& cfg, std::uint64_t seed, std::ostream& out) {
  require_field(cfg.percentile > 0.0 && cfg.percentile <= 1.0, "--percentile", "must lie in (0, 1]");
  const AnnModel model = load_model(cfg.model);
  const auto data = load_batch(cfg.data);
  const CalibrationStats stats = collect_stats(model, data, cfg.percentile);
  save_stats(stats, cfg.out);
  out << "# seed=" << seed << "\n";
  for (const auto& d : stats.dead_channels)
    out << "warning: layer " << d.layer << " channel " << d.channel << " never activates\n";
  out << "calibrated " << model.layers.size() << " layers on " << data.size() << " samples (input max "
      << fmt(stats.input_max) << "); wrote " << cfg.out << "\n";
  return kOk;
}

int cmd_convert(const ConvertConfig& cfg, std::uint64_t seed, std::ostream& out) {
  check_timestep(cfg.timestep);
  check_wait(cfg.wait, cfg.timestep);
  double q = 0.0;
  if (cfg.q == "auto") {
    require_field(cfg.sigma > 0.0, "--sigma", "must be positive");
    const auto grid = make_grid(1.0, 2.0, 0.01);
    q = optimal_q(cfg.timestep, cfg.mu, cfg.sigma, grid);
  } else {
    try {
      std::size_t used = 0;
      q = std::stod(cfg.q, &used);
      if (used != cfg.q.size()) throw std::invalid_argument(cfg.q);
    } catch (const std::exception&) {
      throw validation_error("--q: expected a number in (1, 2] or 'auto', got '" + cfg.q + "'");
    }
  }
  require_field(q > 1.0 && q <= 2.0, "--q", "must lie in (1, 2], got " + std::to_string(q));

  const AnnModel model = load_model(cfg.model);
  const CalibrationStats stats = load_stats(cfg.stats);
  const NormalizedAnn norm = normalize(model, stats);
  SnnModel snn = build(norm, cfg.timestep, cfg.wait, BaseSchedule::uniform(q), !cfg.no_shift);
  if (cfg.int8) snn = quantize_weights(snn);
  save_snn(snn, cfg.out);

  out << "# seed=" << seed << "\n";
  for (const auto& w : norm.warnings) out << "warning: " << w << "\n";
  for (std::size_t i = 0; i < snn.layers.size(); ++i)
    if (snn.layers[i].quant && snn.layers[i].quant->all_zero)
      out << "warning: SNN layer " << i << " has all-zero weights; left unquantized\n";
  out << "converted " << snn.layers.size() << " SNN layers, T=" << cfg.timestep << " w=" << cfg.wait
      << " Q=" << fmt(q, 2) << (cfg.int8 ? " int8" : "") << (cfg.no_shift ? " no-shift" : "")
      << "; wrote " << cfg.out << "\n";
  return kOk;
}

int cmd_run(const RunConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const SnnModel snn = load_snn(cfg.snn);
  const int w = cfg.wait.value_or(snn.wait);
  check_wait(w, snn.timestep);
  const auto data = load_batch(cfg.data);
  const auto labels = checked_labels(cfg.labels, data.size());

  EngineOptions opt;
  opt.wait = w;
  opt.coding = cfg.single_spike_input ? InputCoding::kSingleSpike : InputCoding::kBinary;
  opt.reference_kernels = cfg.reference_kernels;
  const BatchResult b = evaluate(snn, data, opt);
  const double acc = accuracy(b.predictions, labels);
  const RunReport rep = make_report(snn, b, acc, w, seed);
  write_file_atomic(cfg.report, report_csv(rep));
  for (const auto& warning : rep.warnings) out << "warning: " << warning << "\n";
  out << "accuracy " << fmt(100.0 * acc, 2) << "% on " << data.size() << " samples, alpha_fp32 "
      << csv_number(rep.alpha_fp32) << ", latency " << rep.latency_total << " phases; wrote "
      << cfg.report << "\n";
  return kOk;
}

int cmd_sweep_q(const SweepQConfig& cfg, std::uint64_t seed, std::ostream& out) {
  check_timestep(cfg.timestep);
  require_field(cfg.sigma > 0.0, "--sigma", "must be positive");
  require_field(cfg.intervals >= 1, "--intervals", "must be at least 1");
  const auto grid = parse_grid(cfg.grid);
  for (double q : grid) require_field(q >= 1.0 && q <= 2.0, "--grid", "Q values must lie in [1, 2]");

  const int given = !cfg.model.empty() + !cfg.stats.empty() + !cfg.data.empty() + !cfg.labels.empty();
  if (given == 0) {
    emit(mape_csv(sweep_mape(grid, cfg.timestep, cfg.mu, cfg.sigma, cfg.intervals), seed), cfg.out, out);
    return kOk;
  }
  require_field(given == 4, "--model/--stats/--data/--labels", "accuracy sweeps need all four");
  check_wait(cfg.wait, cfg.timestep);
  for (double q : grid) require_field(q > 1.0, "--grid", "accuracy sweeps need Q > 1");
  const NormalizedAnn norm = normalize(load_model(cfg.model), load_stats(cfg.stats));
  const auto data = load_batch(cfg.data);
  const auto labels = checked_labels(cfg.labels, data.size());
  const auto rows = sweep_q(norm, grid, cfg.timestep, cfg.wait, !cfg.no_shift, cfg.int8, data, labels,
                            cfg.mu, cfg.sigma);
  emit(sweep_q_csv(rows, seed), cfg.out, out);
  return kOk;
}

int cmd_sweep_w(const SweepWConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const SnnModel snn = load_snn(cfg.snn);
  std::vector<int> grid;
  if (cfg.grid.empty()) {
    for (int w = 0; w <= snn.timestep; w += 2) grid.push_back(w);
    if (grid.back() != snn.timestep) grid.push_back(snn.timestep);
  } else {
    for (double v : parse_grid(cfg.grid)) {
      require_field(v == std::floor(v), "--grid", "wait values must be integers");
      grid.push_back(static_cast<int>(v));
    }
  }
  for (int w : grid) check_wait(w, snn.timestep, "--grid");
  const auto data = load_batch(cfg.data);
  const auto labels = checked_labels(cfg.labels, data.size());
  emit(sweep_w_csv(sweep_w(snn, grid, data, labels), seed), cfg.out, out);
  return kOk;
}

int cmd_compare(const CompareConfig& cfg, std::uint64_t seed, std::ostream& out) {
  const AnnModel model = load_model(cfg.model);
  const SnnModel snn = load_snn(cfg.snn);
  const int w = cfg.wait.value_or(snn.wait);
  check_wait(w, snn.timestep);
  const auto data = load_batch(cfg.data);
  const auto labels = checked_labels(cfg.labels, data.size());

  std::vector<std::size_t> ann_pred(data.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(data.size()); ++i)
    ann_pred[static_cast<std::size_t>(i)] = argmax_class(predict_logits(model, data[static_cast<std::size_t>(i)]));
  EngineOptions opt;
  opt.wait = w;
  const BatchResult b = evaluate(snn, data, opt);
  const double ann_acc = accuracy(ann_pred, labels);
  const double snn_acc = accuracy(b.predictions, labels);

  std::ostringstream csv;
  csv << "# seed=" << seed << "\nann_accuracy,snn_accuracy,difference,T,w,Q,samples\n"
      << csv_number(ann_acc) << ',' << csv_number(snn_acc) << ',' << csv_number(ann_acc - snn_acc) << ','
      << snn.timestep << ',' << w << ',' << csv_number(snn.schedule.at(0)) << ',' << data.size() << "\n";
  if (!cfg.out.empty()) write_file_atomic(cfg.out, csv.str());
  out << "ANN " << fmt(100.0 * ann_acc, 2) << "%  SNN " << fmt(100.0 * snn_acc, 2) << "%  difference "
      << fmt(100.0 * (ann_acc - snn_acc), 2) << " points (T=" << snn.timestep << ", w=" << w
      << ", Q=" << fmt(snn.schedule.at(0), 2) << ", " << data.size() << " samples)\n";
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-spike SNN conversion and simulation"};
  app.name("onespike");
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style file setting any flag; command-line flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed recorded in every report header")->capture_default_str();

  CalibrateConfig cal;
  auto* c_cal = app.add_subcommand("calibrate", "Collect activation maxima on a calibration batch");
  c_cal->add_option("--model", cal.model, "Model directory (model.json + weights.bin)")->required();
  c_cal->add_option("--data", cal.data, "Calibration batch (.bin with .json sidecar)")->required();
  c_cal->add_option("--percentile", cal.percentile, "Quantile used as the maximum, in (0, 1]")
      ->capture_default_str();
  c_cal->add_option("--out", cal.out, "Output stats.json")->capture_default_str();

  ConvertConfig conv;
  auto* c_conv = app.add_subcommand("convert", "Build a one-spike SNN from a model and its stats");
  c_conv->add_option("--model", conv.model, "Model directory")->required();
  c_conv->add_option("--stats", conv.stats, "stats.json from calibrate")->required();
  c_conv->add_option("--t", conv.timestep, "Timestep T")->capture_default_str();
  c_conv->add_option("--q", conv.q, "Base Q in (1, 2], or 'auto' for the MAPE optimum")
      ->capture_default_str();
  c_conv->add_option("--w", conv.wait, "Wait timestep w in [0, T]")->capture_default_str();
  c_conv->add_flag("--int8", conv.int8, "Quantize weights to 8 bits");
  c_conv->add_flag("--no-shift", conv.no_shift, "Keep the unshifted (floor) threshold");
  c_conv->add_option("--mu", conv.mu, "Gaussian mean for --q auto")->capture_default_str();
  c_conv->add_option("--sigma", conv.sigma, "Gaussian spread for --q auto")->capture_default_str();
  c_conv->add_option("--out", conv.out, "Output snn.json")->capture_default_str();

  RunConfig runc;
  auto* c_run = app.add_subcommand("run", "Simulate an SNN on a labeled batch");
  c_run->add_option("--snn", runc.snn, "snn.json from convert")->required();
  c_run->add_option("--data", runc.data, "Input batch")->required();
  c_run->add_option("--labels", runc.labels, "labels.json")->required();
  c_run->add_option("--w", runc.wait, "Override the wait timestep");
  c_run->add_flag("--single-spike-input", runc.single_spike_input,
                  "Code inputs with one round-off spike instead of binary");
  c_run->add_flag("--reference", runc.reference_kernels, "Use the serial reference kernels");
  c_run->add_option("--report", runc.report, "Output CSV report")->capture_default_str();

  SweepQConfig sq;
  auto* c_sq = app.add_subcommand("sweep-q", "MAPE (and optionally accuracy) over a grid of Q");
  c_sq->add_option("--t", sq.timestep, "Timestep T")->capture_default_str();
  c_sq->add_option("--mu", sq.mu, "Gaussian mean")->capture_default_str();
  c_sq->add_option("--sigma", sq.sigma, "Gaussian spread")->capture_default_str();
  c_sq->add_option("--grid", sq.grid, "lo:hi:step")->capture_default_str();
  c_sq->add_option("--intervals", sq.intervals, "Quadrature intervals")->capture_default_str();
  c_sq->add_option("--model", sq.model, "Model directory (accuracy columns)");
  c_sq->add_option("--stats", sq.stats, "stats.json (accuracy columns)");
  c_sq->add_option("--data", sq.data, "Input batch (accuracy columns)");
  c_sq->add_option("--labels", sq.labels, "labels.json (accuracy columns)");
  c_sq->add_option("--w", sq.wait, "Wait timestep for accuracy columns")->capture_default_str();
  c_sq->add_flag("--int8", sq.int8, "Quantize weights to 8 bits");
  c_sq->add_flag("--no-shift", sq.no_shift, "Keep the unshifted (floor) threshold");
  c_sq->add_option("--out", sq.out, "Output CSV (stdout if omitted)");

  SweepWConfig sw;
  auto* c_sw = app.add_subcommand("sweep-w", "Accuracy and energy over wait timesteps");
  c_sw->add_option("--snn", sw.snn, "snn.json")->required();
  c_sw->add_option("--data", sw.data, "Input batch")->required();
  c_sw->add_option("--labels", sw.labels, "labels.json")->required();
  c_sw->add_option("--grid", sw.grid, "lo:hi:step of w (default 0:T:2)");
  c_sw->add_option("--out", sw.out, "Output CSV (stdout if omitted)");

  CompareConfig cmp;
  auto* c_cmp = app.add_subcommand("compare", "ANN vs SNN accuracy on the same batch");
  c_cmp->add_option("--model", cmp.model, "Model directory")->required();
  c_cmp->add_option("--snn", cmp.snn, "snn.json")->required();
  c_cmp->add_option("--data", cmp.data, "Input batch")->required();
  c_cmp->add_option("--labels", cmp.labels, "labels.json")->required();
  c_cmp->add_option("--w", cmp.wait, "Override the wait timestep");
  c_cmp->add_option("--out", cmp.out, "Optional CSV");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface as CallForHelp from the subcommand.
    std::ostringstream os;
    const int code = app.exit(e, os, os);
    (code == 0 ? out : err) << os.str();
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*c_cal) return cmd_calibrate(cal, seed, out);
    if (*c_conv) return cmd_convert(conv, seed, out);
    if (*c_run) return cmd_run(runc, seed, out);
    if (*c_sq) return cmd_sweep_q(sq, seed, out);
    if (*c_sw) return cmd_sweep_w(sw, seed, out);
    if (*c_cmp) return cmd_compare(cmp, seed, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kValidation: return kValidation;
      case ErrorKind::kIo:
      case ErrorKind::kFormat: return kIoOrFormat;
      case ErrorKind::kNumeric: return kNumeric;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIoOrFormat;
  }
  return kValidation;
}

}  // namespace onespike::cli
