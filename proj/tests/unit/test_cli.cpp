#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "onespike/cli.hpp"
#include "onespike/dataset.hpp"
#include "onespike/io.hpp"
#include "onespike/model_io.hpp"
#include "onespike/snn_model.hpp"
#include "support.hpp"

namespace onespike {
namespace {

using testing::data_dir;
using testing::TempDir;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string mlp() { return (data_dir() / "mlp").string(); }
std::string digits(const std::string& file) { return (data_dir() / "digits" / file).string(); }

// calibrate + convert on the MLP fixture into `dir`.
void convert_mlp(const TempDir& dir, std::vector<std::string> extra = {}) {
  ASSERT_EQ(cli({"calibrate", "--model", mlp(), "--data", digits("calib_flat.bin"), "--out",
                 (dir / "stats.json").string()})
                .code,
            0);
  std::vector<std::string> args{"convert", "--model", mlp(), "--stats", (dir / "stats.json").string(),
                                "--out", (dir / "snn.json").string()};
  args.insert(args.end(), extra.begin(), extra.end());
  const Result r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, AutoQLandsNearOnePointThree) {
  TempDir dir;
  convert_mlp(dir, {"--q", "auto", "--t", "16"});
  const SnnModel snn = load_snn(dir / "snn.json");
  EXPECT_GE(snn.schedule.at(0), 1.25);
  EXPECT_LE(snn.schedule.at(0), 1.35);
}

TEST(Cli, RunWritesReproducibleReport) {
  TempDir dir;
  convert_mlp(dir, {"--w", "8"});
  // A 100-sample slice keeps this quick.
  const auto all = load_batch(digits("test_flat.bin"));
  const auto labels = load_labels(digits("test_labels.json"));
  save_batch(std::vector<Tensor>(all.begin(), all.begin() + 100), dir / "x.bin");
  save_labels(std::vector<std::size_t>(labels.begin(), labels.begin() + 100), dir / "y.json");
  auto run = [&](const std::string& report) {
    return cli({"--seed", "11", "run", "--snn", (dir / "snn.json").string(), "--data", (dir / "x.bin").string(),
                "--labels", (dir / "y.json").string(), "--report", (dir / report).string()});
  };
  ASSERT_EQ(run("a.csv").code, 0);
  ASSERT_EQ(run("b.csv").code, 0);
  const std::string a = read_text_file(dir / "a.csv");
  EXPECT_EQ(a, read_text_file(dir / "b.csv"));
  EXPECT_EQ(a.rfind("# seed=11\n", 0), 0u);
  EXPECT_NE(a.find(",8,1.3,"), std::string::npos);  // T,w,Q columns
  // Serial kernels give the same report.
  ASSERT_EQ(cli({"--seed", "11", "run", "--snn", (dir / "snn.json").string(), "--data", (dir / "x.bin").string(),
                 "--labels", (dir / "y.json").string(), "--reference", "--report", (dir / "c.csv").string()})
                .code,
            0);
  EXPECT_EQ(a, read_text_file(dir / "c.csv"));
}

TEST(Cli, EmptyBatchIsValidationError) {
  TempDir dir;
  convert_mlp(dir);
  std::ofstream(dir / "e.json") << R"({"count": 0, "shape": [256]})";
  std::ofstream(dir / "e.bin");
  std::ofstream(dir / "l.json") << "[]";
  const Result r = cli({"run", "--snn", (dir / "snn.json").string(), "--data", (dir / "e.bin").string(), "--labels",
                        (dir / "l.json").string(), "--report", (dir / "r.csv").string()});
  EXPECT_EQ(r.code, cli::kValidation);
  EXPECT_NE(r.err.find("empty dataset"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(cli({"sweep-q", "--grid", "1.3", "--intervals", "1000"}).code, cli::kOk);
  // Validation: w outside [0, T], unknown flag, missing subcommand.
  const Result bad_w = cli({"convert", "--model", mlp(), "--stats", "x.json", "--t", "8", "--w", "9"});
  EXPECT_EQ(bad_w.code, cli::kValidation);
  EXPECT_NE(bad_w.err.find("--w"), std::string::npos);
  EXPECT_EQ(cli({"convert", "--q", "3", "--model", mlp(), "--stats", "x.json"}).code, cli::kValidation);
  EXPECT_EQ(cli({"run", "--bogus"}).code, cli::kValidation);
  EXPECT_EQ(cli({}).code, cli::kValidation);
  // I/O and format.
  EXPECT_EQ(cli({"calibrate", "--model", (dir / "none").string(), "--data", digits("calib_flat.bin")}).code,
            cli::kIoOrFormat);
  std::ofstream(dir / "model.json") << "{ not json";
  EXPECT_EQ(cli({"calibrate", "--model", dir.path().string(), "--data", digits("calib_flat.bin")}).code,
            cli::kIoOrFormat);
  // Numeric: a network that never activates cannot be normalized.
  AnnModel silent;
  silent.input_shape = {2};
  silent.layers = {Layer::linear(Tensor({2, 2}, 1.0), std::nullopt), Layer::relu(),
                   Layer::linear(Tensor({1, 2}, 1.0), std::nullopt)};
  save_model(silent, dir / "silent");
  save_batch(std::vector<Tensor>{Tensor({2}, 0.0)}, dir / "zeros.bin");
  ASSERT_EQ(cli({"calibrate", "--model", (dir / "silent").string(), "--data", (dir / "zeros.bin").string(), "--out",
                 (dir / "s.json").string()})
                .code,
            cli::kOk);
  EXPECT_EQ(cli({"convert", "--model", (dir / "silent").string(), "--stats", (dir / "s.json").string(), "--out",
                 (dir / "x.json").string()})
                .code,
            cli::kNumeric);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  TempDir dir;
  convert_mlp(dir);
  std::ofstream(dir / "cfg.toml") << "seed = 5\n[convert]\nt = 12\nw = 4\nq = \"1.4\"\n";
  const Result r = cli({"--config", (dir / "cfg.toml").string(), "convert", "--model", mlp(), "--stats",
                        (dir / "stats.json").string(), "--w", "6", "--out", (dir / "c.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("# seed=5\n", 0), 0u);
  const SnnModel snn = load_snn(dir / "c.json");
  EXPECT_EQ(snn.timestep, 12);
  EXPECT_EQ(snn.wait, 6);
  EXPECT_DOUBLE_EQ(snn.schedule.at(0), 1.4);
}

TEST(Cli, SweepOutputsCarrySeed) {
  TempDir dir;
  const Result r = cli({"--seed", "9", "sweep-q", "--grid", "1.2:1.4:0.1", "--intervals", "2000"});
  ASSERT_EQ(r.code, 0);
  std::istringstream is(r.out);
  std::string line;
  std::vector<std::string> ls;
  while (std::getline(is, line)) ls.push_back(line);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], "# seed=9");
  EXPECT_EQ(ls[1], "q,mape");
}

TEST(Cli, CompareReportsSmallGap) {
  TempDir dir;
  convert_mlp(dir, {"--t", "16", "--w", "16"});
  const auto all = load_batch(digits("test_flat.bin"));
  const auto labels = load_labels(digits("test_labels.json"));
  save_batch(std::vector<Tensor>(all.begin(), all.begin() + 300), dir / "x.bin");
  save_labels(std::vector<std::size_t>(labels.begin(), labels.begin() + 300), dir / "y.json");
  const Result r = cli({"compare", "--model", mlp(), "--snn", (dir / "snn.json").string(), "--data",
                        (dir / "x.bin").string(), "--labels", (dir / "y.json").string(), "--out",
                        (dir / "cmp.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream is(read_text_file(dir / "cmp.csv"));
  std::string seed, header, row;
  std::getline(is, seed);
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "ann_accuracy,snn_accuracy,difference,T,w,Q,samples");
  const double ann = std::stod(row.substr(0, row.find(',')));
  const double gap = std::stod(row.substr(row.find(',', row.find(',') + 1) + 1));
  EXPECT_GT(ann, 0.8);
  EXPECT_LE(gap, 0.01);
}

}  // namespace
}  // namespace onespike
