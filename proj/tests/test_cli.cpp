#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(MALEKEH_TEST_WORKDIR) / "cli";

int cli(const std::string& args) {
  std::string cmd = std::string(MALEKEH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    ASSERT_EQ(cli("gen --kind NEAR_REUSE --warps 8 --instrs 120 --seed 3 -o " + (kWork / "near.trace").string()), 0);
  }
  std::string trace() const { return "--trace " + (kWork / "near.trace").string(); }
};

}  // namespace

TEST_F(Cli, GenWritesParsableTrace) {
  auto text = slurp(kWork / "near.trace");
  EXPECT_EQ(text.substr(0, 3), "W0 ");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8 * 120);
}

TEST_F(Cli, UnannotatedTraceNeedsProfiling) {
  EXPECT_EQ(cli("run " + trace() + " --mode malekeh --out " + (kWork / "x").string()), 2);
  EXPECT_EQ(cli("run " + trace() + " --annotate --mode malekeh --num_sms 1 --out " + (kWork / "x").string()), 0);
}

TEST_F(Cli, RunWritesReports) {
  auto out = kWork / "run";
  ASSERT_EQ(cli("run " + trace() + " --annotate --num_sms 1 --interval 100 --out " + out.string()), 0);
  for (auto f : {"report.json", "summary.csv", "adaptive.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  auto j = nlohmann::json::parse(slurp(out / "report.json"));
  EXPECT_EQ(j["mode"], "malekeh");
  EXPECT_EQ(j["instructions"], 960);
  EXPECT_EQ(slurp(out / "adaptive.csv").substr(0, 10), "# config: ");
}

TEST_F(Cli, RunIsByteIdentical) {
  auto a = kWork / "a", b = kWork / "b";
  std::string common = " --annotate --num_sms 1 --seed 9 --mode naive_gto_lru --out ";
  ASSERT_EQ(cli("run " + trace() + common + a.string()), 0);
  ASSERT_EQ(cli("run " + trace() + common + b.string()), 0);
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
}

TEST_F(Cli, ProfileWritesHistogramAndAnnotations) {
  auto out = kWork / "profile";
  ASSERT_EQ(cli("profile " + trace() + " --out " + out.string()), 0);
  EXPECT_EQ(slurp(out / "histogram.csv").substr(0, 13), "bucket,count\n");
  EXPECT_EQ(slurp(out / "annotations.csv").substr(0, 37), "static_id,role,slot,near,far,verdict\n");
}

TEST_F(Cli, AnnotateThenRunWithoutFlag) {
  auto annotated = kWork / "near_annotated.trace";
  ASSERT_EQ(cli("annotate " + trace() + " -o " + annotated.string()), 0);
  EXPECT_NE(slurp(annotated).find("RD:"), std::string::npos);
  EXPECT_EQ(cli("run --trace " + annotated.string() + " --num_sms 1 --out " + (kWork / "y").string()), 0);
}

TEST_F(Cli, SweepRejectsBadInput) {
  EXPECT_EQ(cli("sweep " + trace() + " --param bogus --values 1,2 --out " + (kWork / "s").string()), 1);
  EXPECT_EQ(cli("sweep " + trace() + " --param sthld --values '' --out " + (kWork / "s").string()), 1);
  EXPECT_EQ(cli("run --trace " + (kWork / "missing.trace").string()), 2);
  EXPECT_EQ(cli("run " + trace() + " --not-an-option 3"), 1);
}

TEST_F(Cli, SweepOneRowPerValue) {
  auto out = kWork / "sweep";
  ASSERT_EQ(cli("sweep " + trace() + " --num_sms 1 --param sthld --values 0,1,4 --out " + out.string()), 0);
  auto csv = slurp(out / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("sthld_mode=static"), std::string::npos);
  EXPECT_NE(csv.find("\nsthld,4,malekeh,"), std::string::npos);
}

TEST_F(Cli, CompareBaselineAgainstItself) {
  auto out = kWork / "cmp";
  ASSERT_EQ(cli("compare " + trace() + " --num_sms 1 --modes baseline_ocu --out " + out.string()), 0);
  auto j = nlohmann::json::parse(slurp(out / "compare.json"));
  ASSERT_EQ(j["rows"].size(), 1u);
  for (auto k : {"ipc_norm", "hit_ratio_norm", "bank_reads_norm", "energy_norm", "cycles_norm"})
    EXPECT_DOUBLE_EQ(j["rows"][0][k].get<double>(), 1.0) << k;
}

TEST_F(Cli, CompareOrdersBaselineFirst) {
  auto out = kWork / "cmp2";
  ASSERT_EQ(cli("compare --gen RANDOM:8:100:2 --num_sms 1 --modes malekeh,bow --out " + out.string()), 0);
  auto csv = slurp(out / "compare.csv");
  auto first = csv.find("\nbaseline_ocu,"), second = csv.find("\nmalekeh,"), third = csv.find("\nbow,");
  ASSERT_NE(first, std::string::npos);
  EXPECT_LT(first, second);
  EXPECT_LT(second, third);
}
