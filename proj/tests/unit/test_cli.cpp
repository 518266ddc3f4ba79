#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + std::string(PTRIG_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ptrig-cli-" + std::string(::testing::UnitTest::GetInstance()
                                            ->current_test_info()
                                            ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.json") << R"({
      "inherit": "example2-sync",
      "duration": 1,
      "table": {"grid_size": 11, "samples": 300},
      "cartpole": {"physical_agent": false}
    })";
    config_ = "--config " + (dir_ / "small.json").string();
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out() const { return " --out " + dir_.string(); }
  // Builds the table at its default location inside the output directory.
  int build_default_table() const {
    return cli("build-table " + config_, "PTRIG_OUT_DIR=" + dir_.string() + " ").code;
  }

  fs::path dir_;
  std::string config_;
};

}  // namespace

TEST_F(Cli, PresetsAndValidate) {
  auto r = cli("presets");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("example1-cacc"), std::string::npos);
  EXPECT_NE(r.output.find("example2-stabilize"), std::string::npos);
  r = cli("presets example2-sync");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("cartpole_sync"), std::string::npos);
  r = cli("validate " + config_);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("config fingerprint"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  std::ofstream(dir_ / "bad.json") << R"({"inherit": "example2-sync", "Kay": 2})";
  auto r = cli("validate --config " + (dir_ / "bad.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("Kay"), std::string::npos);
  std::ofstream(dir_ / "nosamples.json") << R"({"inherit": "example2-sync", "table": {"samples": 0}})";
  r = cli("build-table --config " + (dir_ / "nosamples.json").string() + " --out " +
          (dir_ / "t.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(cli("run").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("presets nope").code, 2);
}

TEST_F(Cli, MissingTableNamesBuildTable) {
  const auto r = cli("run " + config_ + out());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("build-table"), std::string::npos) << r.output;
}

TEST_F(Cli, BuildTableIsDeterministic) {
  const auto a = dir_ / "a.json";
  const auto b = dir_ / "b.json";
  EXPECT_EQ(cli("build-table " + config_ + " --jobs 1 --out " + a.string()).code, 0);
  EXPECT_EQ(cli("build-table " + config_ + " --jobs 3 --out " + b.string()).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(cli("build-table " + config_ + " --out " + a.string()).code, 2);
  EXPECT_EQ(cli("build-table " + config_ + " --out " + a.string() + " --overwrite").code, 0);
}

TEST_F(Cli, RunWritesArtifactsAndEchoesSeed) {
  ASSERT_EQ(build_default_table(), 0);
  auto r = cli("run " + config_ + out() + " --seed 7");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto json = slurp(dir_ / "run-PT-seed7.json");
  EXPECT_NE(json.find("\"seed\": 7"), std::string::npos) << json;
  EXPECT_NE(json.find("\"status\": \"OK\""), std::string::npos);
  const auto csv = slurp(dir_ / "run-PT-seed7.csv");
  EXPECT_NE(csv.find("seed=7"), std::string::npos);

  // Outputs are guarded, and reruns are byte-identical.
  EXPECT_EQ(cli("run " + config_ + out() + " --seed 7").code, 2);
  ASSERT_EQ(cli("run " + config_ + out() + " --seed 7 --overwrite").code, 0);
  EXPECT_EQ(slurp(dir_ / "run-PT-seed7.csv"), csv);
  EXPECT_EQ(slurp(dir_ / "run-PT-seed7.json"), json);

  r = cli("run " + config_ + out() + " --policy ET1");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "run-ET1-seed1.json"));
}

TEST_F(Cli, CorruptedTableFails) {
  const auto table = dir_ / "t.json";
  ASSERT_EQ(cli("build-table " + config_ + " --out " + table.string()).code, 0);
  std::string text = slurp(table);
  const auto pos = text.find("\"samples\": 300");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 14, "\"samples\": 301");
  std::ofstream(table, std::ios::binary) << text;
  const auto r = cli("run " + config_ + out() + " --table " + table.string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("checksum"), std::string::npos) << r.output;
}

TEST_F(Cli, MismatchedTableNeedsFlag) {
  std::ofstream(dir_ / "other.json") << R"({"inherit": "small.json", "table": {"seed": 5}})";
  const auto table = dir_ / "t.json";
  ASSERT_EQ(cli("build-table --config " + (dir_ / "other.json").string() + " --out " +
                table.string()).code, 0);
  auto r = cli("run " + config_ + out() + " --table " + table.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("fingerprint"), std::string::npos);
  r = cli("run " + config_ + out() + " --table " + table.string() + " --allow-mismatch");
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST_F(Cli, SweepRowsAndDeterminism) {
  ASSERT_EQ(build_default_table(), 0);
  auto r = cli("sweep " + config_ + out() + " --axis K --values 3..10 --jobs 1");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto csv_path = dir_ / "sweep-K-seed1.csv";
  const auto first = slurp(csv_path);
  std::istringstream in(first);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("axis,", 0) != 0) ++rows;
  }
  EXPECT_EQ(rows, 8 * 4);
  r = cli("sweep " + config_ + out() + " --axis K --values 3..10 --jobs 4 --overwrite");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(csv_path), first);
}

TEST_F(Cli, SweepUsageErrors) {
  EXPECT_EQ(cli("sweep " + config_ + out() + " --axis K --values ,").code, 2);
  EXPECT_EQ(cli("sweep " + config_ + out() + " --axis K --values 5..3").code, 2);
  EXPECT_EQ(cli("sweep " + config_ + out() + " --axis Q --values 1").code, 2);
  EXPECT_EQ(cli("sweep " + config_ + out() + " --axis K").code, 2);
}
