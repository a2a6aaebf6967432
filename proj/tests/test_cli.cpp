#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "preformer/cli.hpp"

using namespace preformer;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "preformer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("preformer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> tiny_train(const std::string& out) const {
    return {"train", "--data", "synth:multi-sine", "--synth-len", "300", "--d-model", "8",
            "--d-ff", "16", "--heads", "2", "--l0", "2", "--e-layers", "1", "--input-len", "16",
            "--pred-len", "8", "--kernel", "5", "--period", "8", "--epochs", "1", "--lr", "1e-3", "--out", out};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpListsDefaults) {
  const Result r = run({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--d-model"), std::string::npos);
  EXPECT_NE(r.out.find("64"), std::string::npos);
  EXPECT_NE(r.out.find("--lr"), std::string::npos);
  EXPECT_NE(r.out.find("0.0001"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train", "--d-model", "10", "--heads", "8"}).code, 2);
  EXPECT_EQ(run({"train", "--input-len", "15"}).code, 2);
  EXPECT_EQ(run({"train", "--input-len", "16"}).code, 2);
  EXPECT_EQ(run({"train", "--split", "thirds"}).code, 2);
  EXPECT_EQ(run({"synth", "--kind", "white-noise"}).code, 2);
}

TEST_F(CliTest, MissingFileExitsOneAndNamesIt) {
  const std::string missing = path("no_such.csv");
  const Result r = run({"train", "--data", missing, "--out", path("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos);
}

TEST_F(CliTest, SynthIsReproducible) {
  ASSERT_EQ(run({"synth", "--kind", "noise-walk", "--len", "200", "--seed", "3", "--output", path("a.csv")}).code, 0);
  ASSERT_EQ(run({"synth", "--kind", "noise-walk", "--len", "200", "--seed", "3", "--output", path("b.csv")}).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  ASSERT_EQ(run({"synth", "--kind", "multi-sine", "--len", "50", "--out", path("d")}).code, 0);
  EXPECT_TRUE(fs::exists(path("d/multi-sine.csv")));
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  {
    std::ofstream cfg(path("run.ini"));
    cfg << "[model]\nd_model = 16\nn_heads = 2\nl0 = 2\ne_layers = 1\ninput_len = 16\npred_len = 8\ndecomp_kernel = 5\n"
        << "[train]\nepochs = 1\nlr = 0.002\n"
        << "[data]\nsource = synth:multi-sine\nsynth_len = 300\nperiod = 8\n";
  }
  const Result r = run({"train", "--config", path("run.ini"), "--d-model", "8", "--d-ff", "16",
                        "--no-multiscale", "--no-predictive", "--out", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string echo = slurp(path("o/config.ini"));
  EXPECT_NE(echo.find("d_model = 8"), std::string::npos) << echo;
  EXPECT_NE(echo.find("lr = 0.002"), std::string::npos) << echo;
  EXPECT_NE(echo.find("multiscale = false"), std::string::npos) << echo;
  EXPECT_NE(echo.find("predictive = false"), std::string::npos) << echo;
  for (const char* f : {"metrics.log", "checkpoint.bin", "report.json", "horizon.csv"}) {
    EXPECT_TRUE(fs::exists(path(std::string("o/") + f))) << f;
  }

  std::ofstream(path("bad.ini")) << "[model]\nwidth = 3\n";
  EXPECT_EQ(run({"train", "--config", path("bad.ini")}).code, 2);
}

TEST_F(CliTest, BenchGrid) {
  const Result r = run({"bench", "--lengths", "192,720,1440", "--reps", "1", "--d-model", "16",
                        "--heads", "2", "--out", path("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(path("b/bench.csv")));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 9);
  const auto j = nlohmann::json::parse(slurp(path("b/bench.json")));
  EXPECT_EQ(j.size(), 9u);
}

TEST_F(CliTest, AblateTable) {
  std::vector<std::string> args = tiny_train(path("a"));
  args[0] = "ablate";
  const Result r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(path("a/ablation.csv")));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST_F(CliTest, PredictReproducesTrainMse) {
  ASSERT_EQ(run(tiny_train(path("t"))).code, 0);
  const auto report = nlohmann::json::parse(slurp(path("t/report.json")));
  const double train_mse = report["test"]["mse"].get<double>();

  const Result p = run({"predict", "--checkpoint", path("t/checkpoint.bin"), "--windows", "test",
                        "--output", path("f.csv"), "--out", path("p")});
  ASSERT_EQ(p.code, 0) << p.err;
  const Result e = run({"eval", "--forecast", path("f.csv"), "--out", path("e")});
  ASSERT_EQ(e.code, 0) << e.err;
  const double eval_mse = std::stod(e.out.substr(e.out.find("mse ") + 4));
  EXPECT_NEAR(eval_mse, train_mse, 1e-9 * train_mse);

  const Result fin = run({"predict", "--checkpoint", path("t/checkpoint.bin"), "--output", path("final.csv"),
                          "--out", path("p")});
  ASSERT_EQ(fin.code, 0) << fin.err;
  std::istringstream rows(slurp(path("final.csv")));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "timestamp,feature,prediction,truth");
  int n = 0;
  while (std::getline(rows, line)) ++n;
  EXPECT_EQ(n, 8 * 3);
}

TEST_F(CliTest, FeatureCountMismatch) {
  ASSERT_EQ(run(tiny_train(path("t"))).code, 0);
  ASSERT_EQ(run({"synth", "--kind", "noise-walk", "--len", "100", "--output", path("nw.csv")}).code, 0);
  const Result r = run({"predict", "--checkpoint", path("t/checkpoint.bin"), "--data", path("nw.csv"),
                        "--out", path("p")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ConfigMismatch"), std::string::npos) << r.err;
}
