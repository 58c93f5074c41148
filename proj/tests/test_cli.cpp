#include <gtest/gtest.h>

#include <cstdlib>
#include <regex>
#include <sstream>

#include "drugsurv/cli.hpp"
#include "fixtures.hpp"

using namespace drugsurv;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Wall-clock fields are the only permitted differences between runs.
std::string mask_timing(const std::string& s) {
  static const std::regex seconds("\"seconds\": ?[0-9.eE+-]+");
  static const std::regex runtime("(,[0-9]+\\.[0-9]{4},[0-9]+\\.[0-9]{4}),[0-9]+\\.[0-9]{3}");
  return std::regex_replace(std::regex_replace(s, seconds, "\"seconds\":T"), runtime, "$1,T");
}

std::string cohort_file(const fs::path& dir) {
  const auto path = (dir / "cohort.csv").string();
  const auto r = run({"synth", "--seed", "42", "--n", "300", "--out", path});
  EXPECT_EQ(r.code, 0) << r.err;
  return path;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  const auto r = run({"train", "--model", "glm"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, DataErrorsExitOne) {
  const auto dir = fixtures::scratch_dir("cli_errors");
  const auto cohort = cohort_file(dir);
  auto r = run({"train", "--model", "svm", "--cohort", cohort, "--out", (dir / "m.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: InvalidConfig: ", 0), 0u) << r.err;
  r = run({"train", "--model", "glm", "--cohort", (dir / "none.csv").string(), "--out", (dir / "m.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: IoError: ", 0), 0u) << r.err;

  std::ofstream(dir / "bad.csv") << "age_years\n40\n";
  r = run({"train", "--model", "glm", "--cohort", (dir / "bad.csv").string(), "--out", (dir / "m.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("MissingColumn"), std::string::npos);

  std::ofstream(dir / "junk.json") << "{\"format_version\": 7}";
  r = run({"optimize", "--model-file", (dir / "junk.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("VersionMismatch"), std::string::npos);
}

TEST(Cli, SynthWritesProvenanceAndLoads) {
  const auto dir = fixtures::scratch_dir("cli_synth");
  const auto path = cohort_file(dir);
  const auto text = fixtures::read_file(path);
  EXPECT_EQ(text.rfind("# drugsurv format_version=1 seed=42 config_hash=", 0), 0u);
  std::ifstream in(path);
  EXPECT_EQ(parse_cohort(in).size(), 300u);
}

TEST(Cli, TrainEvaluateOptimizePredict) {
  const auto dir = fixtures::scratch_dir("cli_flow");
  const auto cohort = cohort_file(dir);
  const auto model = (dir / "tree.json").string();
  auto r = run({"train", "--model", "tree", "--cohort", cohort, "--out", model, "--export-tree",
                (dir / "tree.txt").string(), "--export-dot", (dir / "tree.dot").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(fixtures::read_file(model));
  EXPECT_EQ(j["kind"], "tree");
  EXPECT_TRUE(j.contains("schema"));
  EXPECT_EQ(j["run"]["seed"], 0);
  EXPECT_FALSE(fixtures::read_file(dir / "tree.txt").empty());
  EXPECT_EQ(fixtures::read_file(dir / "tree.dot").rfind("digraph", 0), 0u);

  r = run({"evaluate", "--model", "glm,tree", "--cohort", cohort, "--k", "5", "--seed", "3", "--out",
           (dir / "cv.csv").string(), "--confusion-out", (dir / "cm.csv").string(), "--auc-out",
           (dir / "auc.csv").string(), "--roc-out", (dir / "roc.svg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("model,accuracy,sd,runtime_s\nglm,"), std::string::npos);
  EXPECT_NE(r.out.find("\ntree,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "cm_glm.csv"));
  EXPECT_TRUE(fs::exists(dir / "cm_tree.csv"));
  EXPECT_TRUE(fs::exists(dir / "roc_tree.svg"));

  r = run({"optimize", "--model-file", model, "--min-probability", "0.6", "--out", (dir / "opt.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto opt = nlohmann::json::parse(fixtures::read_file(dir / "opt.json"));
  EXPECT_TRUE(opt.contains("constraints"));
  EXPECT_TRUE(opt.contains("method"));

  r = run({"predict", "--model-file", model, "--input", cohort, "--row", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).contains("probabilities"));
}

TEST(Cli, LengthEvaluation) {
  const auto dir = fixtures::scratch_dir("cli_length");
  const auto cohort = cohort_file(dir);
  const auto r = run({"length-eval", "--cohort", cohort, "--seed", "1", "--plot-out", (dir / "ba.svg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n,bias,sd,lower,upper,mae,pearson_r\n300,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "ba.svg"));
}

TEST(Cli, SameSeedsGiveIdenticalFiles) {
  std::string outputs[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = fixtures::scratch_dir("cli_det_" + std::to_string(i));
    const auto cohort = cohort_file(dir);
    const auto model = (dir / "forest.json").string();
    ASSERT_EQ(run({"train", "--model", "forest", "--trees", "10", "--seed", "9", "--cohort", cohort, "--out", model})
                  .code,
              0);
    const auto ev = run({"evaluate", "--model", "gbt", "--rounds", "10", "--cohort", cohort, "--seed", "4"});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto opt = run({"optimize", "--model-file", model});
    ASSERT_EQ(opt.code, 0) << opt.err;
    outputs[i] = fixtures::read_file(cohort) + mask_timing(fixtures::read_file(model)) + mask_timing(ev.out) +
                 mask_timing(opt.out);
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_NE(outputs[0].find("\"seconds\":T"), std::string::npos);
}

TEST(Cli, BinaryRuns) {
  const auto dir = fixtures::scratch_dir("cli_binary");
  const auto out = (dir / "c.csv").string();
  const std::string cmd = std::string(DRUGSURV_CLI_PATH) + " synth --n 20 --out " + out + " > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  std::ifstream in(out);
  EXPECT_EQ(parse_cohort(in).size(), 20u);
  const std::string bad = std::string(DRUGSURV_CLI_PATH) + " nothing > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
