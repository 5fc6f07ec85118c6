#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "lion/checkpoint.hpp"
#include "lion/report.hpp"
#include "lion_cli/commands.hpp"

namespace lion::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "lion");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small desk task so the whole suite stays fast.
std::vector<std::string> small(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{"--out", out.string(), "--hidden", "64", "--pretrain-epochs", "80",
                             "--epochs", "8", "--train-size", "200", "--test-size", "200", "--seed", "3"};
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

std::vector<std::string> cmd(const std::string& name, std::vector<std::string> args) {
  args.insert(args.begin(), name);
  return args;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "lion_cli_unit";
    fs::remove_all(dir_);
    const Result r = invoke(cmd("pretrain", small(dir_)));
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, PretrainIsDeterministic) {
  const fs::path again = dir_ / "again";
  const Result r = invoke(cmd("pretrain", small(again)));
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(ckpt::read_file(dir_ / "backbone.ckpt"), ckpt::read_file(again / "backbone.ckpt"));
  const auto rows = report::read_csv(ckpt::read_file(dir_ / "pretrain.csv"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_GE(rows[0].accuracy, 0.9);
}

TEST_F(Cli, TuneThenEvalReproducesAccuracy) {
  const Result t = invoke(cmd("tune", small(dir_, {"--protocol", "lion", "--tau", "0.4", "--layers", "1"})));
  ASSERT_EQ(t.code, kOk) << t.err;
  EXPECT_NE(t.out.find("alpha1"), std::string::npos);
  const Result e = invoke(cmd("eval", small(dir_, {"--protocol", "lion"})));
  ASSERT_EQ(e.code, kOk) << e.err;
  const auto tuned = report::read_csv(ckpt::read_file(dir_ / "tune_lion.csv"));
  const auto evaled = report::read_csv(ckpt::read_file(dir_ / "eval_lion.csv"));
  ASSERT_EQ(tuned.size(), 1u);
  ASSERT_EQ(evaled.size(), 1u);
  EXPECT_EQ(tuned[0].accuracy, evaled[0].accuracy);
  EXPECT_EQ(tuned[0].trainable_params, evaled[0].trainable_params);

  const std::string trace = ckpt::read_file(dir_ / "trace_lion.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')),
            "epoch,loss,accuracy,crucial_fraction,noncrucial_mean_abs,alpha1,alpha2");
}

TEST_F(Cli, CheckpointSurvivesTrainSaveLoadEvalCycle) {
  const fs::path sub = dir_ / "cycle";
  ASSERT_EQ(invoke(cmd("tune", small(dir_, {"--protocol", "lion", "--model", (sub / "m.ckpt").string()}))).code, kOk);
  const auto first = ckpt::read_file(sub / "m.ckpt");
  ckpt::save(ckpt::from_prompt_model(ckpt::prompt_model_from(ckpt::load(sub / "m.ckpt"))), sub / "m2.ckpt");
  EXPECT_EQ(first, ckpt::read_file(sub / "m2.ckpt"));
}

TEST_F(Cli, ReportOverFourProtocols) {
  std::vector<std::string> files;
  for (const std::string p : {"head_tuning", "bias_tuning", "full_finetune", "lion"}) {
    const Result r = invoke(cmd("tune", small(dir_, {"--protocol", p})));
    ASSERT_EQ(r.code, kOk) << p << ": " << r.err;
    files.push_back((dir_ / ("tune_" + p + ".csv")).string());
  }
  std::vector<std::string> args{"report"};
  args.insert(args.end(), files.begin(), files.end());
  args.insert(args.end(), {"--out", (dir_ / "rep").string()});
  const Result r = invoke(args);
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rows = report::read_csv(ckpt::read_file(dir_ / "rep" / "report.csv"));
  ASSERT_EQ(rows.size(), 4u);
  std::size_t lion_params = 0, full_params = 0;
  for (const auto& row : rows) {
    if (row.protocol == "lion") lion_params = row.trainable_params;
    if (row.protocol == "full_finetune") full_params = row.trainable_params;
  }
  EXPECT_LT(lion_params, full_params);
  // Table rows appear best first.
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& row : rows) sorted.emplace_back(row.accuracy, row.protocol);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t last = 0;
  for (const auto& [acc, name] : sorted) {
    const std::size_t at = r.out.find(name + " ");
    ASSERT_NE(at, std::string::npos) << name;
    EXPECT_GE(at, last) << name;
    last = at;
  }
  EXPECT_NE(r.out.find("1179648"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  const fs::path cfg = dir_ / "run.cfg";
  RunConfig c;
  c.out = dir_.string();
  c.hidden = 64;
  c.pretrain_epochs = 80;
  c.epochs = 3;
  c.train_size = 200;
  c.test_size = 200;
  c.seed = 3;
  c.protocol = "head_tuning";
  ckpt::write_file_atomic(cfg, serialize_config(c));
  const Result r = invoke({"tune", "--config", cfg.string(), "--epochs", "2"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rows = report::read_csv(ckpt::read_file(dir_ / "tune_head_tuning.csv"));
  EXPECT_LE(rows[0].epochs, 2);
  const RunConfig saved = parse_config(ckpt::read_file(dir_ / "tune_head_tuning.cfg"));
  EXPECT_EQ(saved.epochs, 2);
}

TEST(CliErrors, ExitCodes) {
  const fs::path dir = fs::temp_directory_path() / "lion_cli_errors";
  fs::remove_all(dir);
  fs::create_directories(dir);

  Result r = invoke({"tune", "--protocol", "vpt", "--out", dir.string()});
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("unsupported protocol"), std::string::npos);

  r = invoke({"tune", "--out", dir.string()});
  EXPECT_EQ(r.code, kMissingArtifact);

  ckpt::write_file_atomic(dir / "bad.cfg", "seed = 1\nkappa = 2.5\n");
  r = invoke({"pretrain", "--config", (dir / "bad.cfg").string()});
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("kappa"), std::string::npos);

  r = invoke({"pretrain", "--config", (dir / "absent.cfg").string()});
  EXPECT_EQ(r.code, kMissingArtifact);

  r = invoke({"tune", "--no-such-flag", "1"});
  EXPECT_EQ(r.code, kConfigError);

  r = invoke({"report", (dir / "absent.csv").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kMissingArtifact);

  ckpt::write_file_atomic(dir / "junk.csv", "not,a,report\n");
  r = invoke({"report", (dir / "junk.csv").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kMissingArtifact);

  ckpt::write_file_atomic(dir / "junk.ckpt", "LIONCKPT garbage");
  r = invoke({"eval", "--model", (dir / "junk.ckpt").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kMissingArtifact);
}

TEST(CliGradcheck, RowCountAndTaxonomy) {
  Result r = invoke({"gradcheck", "--cases", "4", "--out", "unused"});
  ASSERT_EQ(r.code, kOk) << r.err;
  std::size_t rows = 0;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) rows += line.find("  ok") != std::string::npos ? 1 : 0;
  EXPECT_EQ(rows, 4u);

  // A tiny cell can land on an exact fixed point, so use the full suite.
  r = invoke({"gradcheck", "--tol", "1e-30"});
  EXPECT_EQ(r.code, kCheckFailed);
  EXPECT_NE(r.err.find("solver non-convergence"), std::string::npos);
  EXPECT_EQ(r.err.find("gradient check failed"), std::string::npos);
}

TEST(CliProp1, Verdict) {
  const fs::path dir = fs::temp_directory_path() / "lion_cli_prop1";
  const Result r = invoke({"prop1", "--out", dir.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("verdict: asymmetry confirmed"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "prop1.csv"));
}

}  // namespace
}  // namespace lion::cli
