#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsym/cli.hpp"
#include "wsym/propverify.hpp"
#include "wsym/serialize.hpp"
#include "wsym/zoogen.hpp"

using namespace wsym;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, sep);) out.push_back(cell);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("wsym_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_cli(args, out, err);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
  std::ostringstream out, err;
};

}  // namespace

TEST_F(Cli, ZooGenAndAugment) {
  ASSERT_EQ(run({"zoo", "gen", "--n", "20", "--task", "2d-two-class", "--seed", "7", "--out", p("zoo.json")}), kExitOk)
      << err.str();
  EXPECT_TRUE(fs::exists(p("zoo.json.csv")));
  const RunManifest m = manifest_from_json(parse_json(slurp(p("zoo.json.run.json"))));
  EXPECT_EQ(m.seed, 7u);
  EXPECT_FALSE(m.finished.empty());
  EXPECT_NE(std::find(m.outputs.begin(), m.outputs.end(), p("zoo.json")), m.outputs.end());

  ASSERT_EQ(run({"zoo", "gen", "--n", "20", "--seed", "7", "--out", p("again.json")}), kExitOk);
  EXPECT_EQ(slurp(p("zoo.json")), slurp(p("again.json")));

  ASSERT_EQ(run({"zoo", "augment", "--in", p("zoo.json"), "--factor", "2", "--scale-exp", "3", "--out", p("aug.json")}),
            kExitOk)
      << err.str();
  EXPECT_EQ(load_zoo(p("aug.json")).entries.size(), 40u);

  EXPECT_EQ(run({"zoo", "gen", "--n", "20"}), kExitUsage);
  EXPECT_EQ(run({"zoo", "augment", "--in", p("zoo.json"), "--scale-exp", "5", "--out", p("x.json")}), kExitUsage);
  EXPECT_EQ(run({"zoo", "gen", "--n", "20", "--task", "xor", "--out", p("x.json")}), kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), kExitUsage);
}

TEST_F(Cli, TrainEvalDeterministic) {
  ASSERT_EQ(run({"zoo", "gen", "--n", "40", "--seed", "3", "--out", p("zoo.json")}), kExitOk);
  const std::vector<std::string> base{"train", "--zoo", p("zoo.json"), "--seeds", "1", "2", "--epochs", "3"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with({"--out", p("a"), "--jobs", "2"})), kExitOk) << err.str();
  ASSERT_EQ(run(with({"--out", p("b")})), kExitOk);
  EXPECT_EQ(slurp(p("a/metrics.csv")), slurp(p("b/metrics.csv")));
  EXPECT_EQ(slurp(p("a/history.csv")), slurp(p("b/history.csv")));
  const std::string metrics = slurp(p("a/metrics.csv"));
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "seed,split,tau,loss,n");
  EXPECT_TRUE(fs::exists(p("a/model-s1.json")));
  EXPECT_TRUE(fs::exists(p("a/run.json")));
  ASSERT_EQ(run(with({"--out", p("off"), "--quasi", "off"})), kExitOk);
  EXPECT_TRUE(fs::exists(p("off/metrics.csv")));

  ASSERT_EQ(run({"eval", "--model", p("a/model-s1.json"), "--zoo", p("zoo.json"), "--split", "test", "--out",
                 p("eval.csv")}),
            kExitOk)
      << err.str();
  ASSERT_EQ(run({"eval", "--model", p("a/model-s1.json"), "--zoo", p("zoo.json"), "--split", "test", "--threshold",
                 "0.8", "--out", p("eval_hi.csv")}),
            kExitOk);
  const Zoo zoo = load_zoo(p("zoo.json"));
  const auto rows = split(slurp(p("eval_hi.csv")), '\n');
  ASSERT_EQ(rows.size(), 2u);
  const auto header = split(rows[0]);
  const auto n_col = std::find(header.begin(), header.end(), "n") - header.begin();
  EXPECT_EQ(std::stoul(split(rows[1])[n_col]), select(zoo, Split::kTest, false, 0.8).size());

  EXPECT_EQ(run({"eval", "--model", p("missing.json"), "--zoo", p("zoo.json"), "--out", p("e.csv")}), kExitUsage);
  EXPECT_EQ(run({"train", "--zoo", p("zoo.json"), "--quasi", "maybe", "--out", p("c")}), kExitUsage);
  std::ofstream(p("bad.json")) << "{\"version\": \"weightsym/1\", \"kind\": \"zoo\"";
  EXPECT_EQ(run({"train", "--zoo", p("bad.json"), "--out", p("c")}), kExitUsage);
}

TEST_F(Cli, VerifyExitCodes) {
  EXPECT_EQ(run({"verify", "--samples", "5", "--out", p("v.csv")}), kExitOk) << out.str();
  EXPECT_EQ(split(slurp(p("v.csv")), '\n').size(), 1 + suite_property_names().size());
  EXPECT_EQ(run({"verify", "--samples", "5", "--fault", "monomial"}), kExitFailure);
  EXPECT_EQ(run({"verify", "--samples", "5", "--property", "no-such"}), kExitUsage);
  EXPECT_EQ(run({"verify", "--samples", "0"}), kExitUsage);
}

TEST_F(Cli, ReportMeanAndStandardError) {
  fs::create_directories(dir / "runs");
  const std::vector<double> tau{0.5, 0.6, 0.55, 0.7, 0.65};
  std::string csv = "seed,split,tau,loss,n\n";
  for (std::size_t s = 0; s < tau.size(); ++s) csv += std::to_string(s) + ",test," + std::to_string(tau[s]) + ",0.3,30\n";
  std::ofstream(dir / "runs" / "metrics.csv") << csv;

  ASSERT_EQ(run({"report", "--in", p("runs"), "--out", p("rep")}), kExitOk) << err.str();
  const auto rows = split(slurp(p("rep/summary.csv")), '\n');
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "label,split,n,tau_mean,tau_se,loss_mean,loss_se");
  const auto r = split(rows[1]);
  double mean = 0.0, ss = 0.0;
  for (double t : tau) mean += t / 5.0;
  for (double t : tau) ss += (t - mean) * (t - mean);
  EXPECT_EQ(r[2], "5");
  EXPECT_NEAR(std::stod(r[3]), mean, 1e-12);
  EXPECT_NEAR(std::stod(r[4]), std::sqrt(ss / 4.0) / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(std::stod(r[6]), 0.0, 1e-15);
  const std::string svg = slurp(p("rep/tau.svg"));
  ASSERT_EQ(run({"report", "--in", p("runs"), "--out", p("rep2")}), kExitOk);
  EXPECT_EQ(slurp(p("rep2/tau.svg")), svg);

  std::ofstream(dir / "empty.csv") << "seed,split,tau,loss,n\n";
  EXPECT_EQ(run({"report", "--in", p("empty.csv"), "--out", p("rep3")}), kExitUsage);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
  setenv(kOutDirEnv, dir.c_str(), 1);
  const int code = run({"zoo", "gen", "--n", "10", "--out", "rel.json"});
  unsetenv(kOutDirEnv);
  EXPECT_EQ(code, kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "rel.json"));
}

TEST(CliMeanSe, Examples) {
  EXPECT_EQ(mean_se({2.0}).se, 0.0);
  const MeanSe m = mean_se({1.0, 3.0});
  EXPECT_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.se, 1.0, 1e-15);
}

TEST(CliBinary, ExitCodesThroughTheProcess) {
  const std::string bin = WSYM_CLI_PATH;
  auto code = [&](const std::string& args) {
    const int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  EXPECT_EQ(code("verify --samples 3 --property group-laws"), kExitOk);
  EXPECT_EQ(code("verify --samples 3 --property bogus"), kExitUsage);
  EXPECT_EQ(code("zoo gen --n 10"), kExitUsage);
  EXPECT_EQ(code("verify --samples 3 --property symmetry-mlp --fault monomial"), kExitFailure);
}
