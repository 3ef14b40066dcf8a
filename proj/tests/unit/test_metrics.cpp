#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "onespike/errors.hpp"
#include "onespike/metrics.hpp"
#include "support.hpp"

namespace onespike {
namespace {

using testing::pipeline;
using testing::random_tensor;

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::size_t commas(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), ',')); }

TEST(Alpha, Examples) {
  const std::vector<std::size_t> ops{1000}, adds{1000};
  EXPECT_NEAR(alpha(ops, adds, EnergyModel::fp32()), 5.111, 1e-3);
  EXPECT_NEAR(alpha(ops, adds, EnergyModel::int8()), 6.667, 1e-3);
  // A spike rate of 0.36 means 0.36 additions per MAC.
  const std::vector<std::size_t> sparse{360};
  EXPECT_NEAR(alpha(ops, sparse, EnergyModel::fp32()), 14.20, 5e-3);
}

TEST(Alpha, ConsistencyIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> d(1, 100000);
  for (int i = 0; i < 100; ++i) {
    const std::vector<std::size_t> ops{d(rng), d(rng), d(rng)}, adds{d(rng), d(rng)};
    for (const auto& e : {EnergyModel::fp32(), EnergyModel::int8()}) {
      const double a = alpha(ops, adds, e);
      const double lhs = a * e.e_add * static_cast<double>(adds[0] + adds[1]);
      const double rhs = e.e_mac * static_cast<double>(ops[0] + ops[1] + ops[2]);
      EXPECT_NEAR(lhs / rhs, 1.0, 1e-12);
    }
  }
}

TEST(Alpha, ZeroAdditionsIsInfiniteWithWarning) {
  std::vector<std::string> warnings;
  const std::vector<std::size_t> ops{10}, adds{0};
  EXPECT_TRUE(std::isinf(alpha(ops, adds, EnergyModel::fp32(), &warnings)));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Alpha, EnergyModelValidation) {
  EXPECT_THROW(alpha(std::vector<std::size_t>{1}, std::vector<std::size_t>{1}, EnergyModel{0.5, 0.9, "bad"}),
               Error);
  EXPECT_THROW((EnergyModel{1.0, 0.0, "zero"}.validate()), Error);
}

TEST(OpCount, ConvAndLinear) {
  AnnModel m;
  m.input_shape = {6, 8, 8};
  m.layers = {Layer::conv2d(Tensor({16, 6, 3, 3}, 0.1), std::nullopt, 1, 1), Layer::relu(), Layer::flatten(),
              Layer::linear(Tensor({10, 1024}, 0.1), std::nullopt)};
  const auto ops = op_count_ann(m);
  EXPECT_EQ(ops[0], 55296u);  // 16*8*8 outputs * 3*3*6
  EXPECT_EQ(ops[1], 0u);
  EXPECT_EQ(ops[2], 0u);
  EXPECT_EQ(ops[3], 10240u);

  AnnModel small;
  small.input_shape = {20};
  small.layers = {Layer::linear(Tensor({10, 20}, 0.1), std::nullopt)};
  EXPECT_EQ(op_count_ann(small)[0], 200u);
}

TEST(Latency, Formula) {
  EXPECT_EQ(latency(10, 16, 10, 3), 280u);
  EXPECT_EQ(latency(7, 16, 0, 5), 7u * 16u);
  // Per-image latency tends to T + w.
  const double per = static_cast<double>(latency(1'000'000, 24, 16, 10)) / 1e6;
  EXPECT_NEAR(per, 40.0, 1e-3);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint64_t> d(1, 1000);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t n = d(rng), t = d(rng) % 64 + 1, w = d(rng) % (t + 1), l = d(rng) % 30 + 1;
    ASSERT_EQ(latency(n, t, w, l), n * (t + w) + w * (l - 1));
  }
  EXPECT_THROW(latency(0, 16, 0, 1), Error);
}

TEST(Report, CsvLayout) {
  const auto& p = pipeline("mlp");
  const SnnModel snn = build(p.norm, 16, 10, BaseSchedule::uniform(1.3));
  const std::vector<Tensor> xs(p.test.begin(), p.test.begin() + 50);
  const BatchResult b = evaluate(snn, xs);
  const RunReport r = make_report(snn, b, 0.9, 10, 7);
  const auto ls = lines(report_csv(r));
  ASSERT_GE(ls.size(), 5u);
  EXPECT_EQ(ls[0], "# seed=7");
  EXPECT_EQ(ls[1], "layer,kind,op_ann,spikes,additions,spike_rate");
  EXPECT_EQ(ls[2].rfind("input,Input,0,", 0), 0u);
  for (std::size_t i = 2; i < 2 + r.layers.size(); ++i) EXPECT_EQ(commas(ls[i]), 5u) << ls[i];
  const std::string& header = ls[2 + r.layers.size()];
  EXPECT_EQ(header.rfind("alpha_fp32,alpha_int8,accuracy,T,w,Q,latency_total", 0), 0u);
  EXPECT_EQ(commas(ls.back()), commas(header));
  EXPECT_EQ(r.n_layers, snn.neuron_layers());
  EXPECT_EQ(r.latency_total, latency(50, 16, 10, r.n_layers));
  // Byte-identical on a rerun.
  EXPECT_EQ(report_csv(make_report(snn, evaluate(snn, xs), 0.9, 10, 7)), report_csv(r));
}

TEST(Report, HiddenAlphaIsAtLeastTheMacAddRatio) {
  // Past the first layer every presynaptic neuron spikes at most once, so each
  // synapse costs at most one addition.
  const auto& p = pipeline("mlp");
  const SnnModel snn = build(p.norm, 16, 16, BaseSchedule::uniform(1.3));
  const std::vector<Tensor> xs(p.test.begin(), p.test.begin() + 100);
  const RunReport r = make_report(snn, evaluate(snn, xs), 0.0, 16);
  EXPECT_GE(r.alpha_fp32_hidden, 4.6 / 0.9);
  EXPECT_GE(r.alpha_int8_hidden, 0.2 / 0.03);
  for (std::size_t i = 1; i < r.layers.size(); ++i) EXPECT_LE(r.layers[i].spike_rate, 1.0);
}

TEST(Sweep, SinglePointGridGivesOneRow) {
  const std::vector<double> grid{1.3};
  const auto rows = sweep_mape(grid, 16, 0.0, 1.0, 10000);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(lines(mape_csv(rows, 0)).size(), 3u);
  EXPECT_THROW(sweep_mape(std::vector<double>{}, 16, 0.0, 1.0), Error);
}

TEST(Sweep, FullWaitIsNearBestAccuracy) {
  const auto& p = pipeline("mlp");
  const SnnModel snn = build(p.norm, 16, 16, BaseSchedule::uniform(1.3));
  const std::vector<Tensor> xs(p.test.begin(), p.test.begin() + 300);
  const std::vector<std::size_t> ys(p.labels.begin(), p.labels.begin() + 300);
  const std::vector<int> grid{0, 4, 8, 12, 16};
  const auto rows = sweep_w(snn, grid, xs, ys);
  double best = 0.0;
  for (const auto& r : rows) best = std::max(best, r.accuracy);
  EXPECT_GE(rows.back().accuracy, best - 0.005);
  // Waiting costs latency.
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(rows[i].latency_total, rows[i - 1].latency_total);
  EXPECT_EQ(lines(sweep_w_csv(rows, 3)).size(), rows.size() + 2);
}

TEST(Sweep, MapeOptimumIsNearBestAccuracy) {
  const auto& p = pipeline("mlp");
  const std::vector<Tensor> xs(p.test.begin(), p.test.begin() + 300);
  const std::vector<std::size_t> ys(p.labels.begin(), p.labels.begin() + 300);
  const std::vector<double> grid{1.1, 1.2, 1.3, 1.4, 1.5, 1.7, 2.0};
  const auto rows = sweep_q(p.norm, grid, 16, 16, true, false, xs, ys);
  ASSERT_EQ(rows.size(), grid.size());
  std::size_t arg_mape = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].mape < rows[arg_mape].mape) arg_mape = i;
    best = std::max(best, rows[i].accuracy);
  }
  EXPECT_NEAR(rows[arg_mape].q, 1.3, 0.11);
  EXPECT_GE(rows[arg_mape].accuracy, best - 0.02);
}

}  // namespace
}  // namespace onespike
