// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/cli.hpp>
#include <pe3d/io.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace pe3d {
namespace {

namespace fs = std::filesystem;

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "pe3d");
  testing::internal::CaptureStderr();
  const int rc = cli::run(args);
  testing::internal::GetCapturedStderr();
  return rc;
}

std::string run_stdout(std::vector<std::string> args, int* rc = nullptr) {
  testing::internal::CaptureStdout();
  const int code = run(std::move(args));
  if (rc) *rc = code;
  return testing::internal::GetCapturedStdout();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("pe3d_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("PE3D_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("PE3D_SEED");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
  EXPECT_EQ(run({"render"}), cli::kExitUsage);
  EXPECT_EQ(run({"render", "--out-dir", path("x"), "--stride", "0"}), cli::kExitUsage);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run({"render", "--out-dir", path("r"), "--scene", path("missing.json")}), cli::kExitData);
  EXPECT_EQ(run({"encode", "--out-dir", path("e"), "--variant", "nope"}), cli::kExitData);
  EXPECT_EQ(run({"encode", "--out-dir", path("e"), "--variant", "camera-ray", "--bins", "ud:1:61:1"}),
            cli::kExitData);
  EXPECT_EQ(run({"discrepancy-sweep", "--alpha", "90"}), cli::kExitData);
}

TEST_F(CliTest, RenderWritesDepthAndAnnotations) {
  ASSERT_EQ(run({"render", "--out-dir", path("r"), "--seed", "3", "--stride", "32"}), cli::kExitOk);
  int dpth = 0;
  for (const auto& e : fs::directory_iterator(path("r"))) {
    if (e.path().extension() == ".dpth") {
      const DepthMap d = decode_depth_map(read_file(e.path().string()));
      EXPECT_EQ(d.width, 22);
      EXPECT_EQ(d.height, 8);
      ++dpth;
    }
  }
  EXPECT_EQ(dpth, 6);
  EXPECT_NE(read_file(path("r/annotations.json")).find("\"objects\""), std::string::npos);
}

TEST_F(CliTest, EncodeIsByteIdenticalAcrossRuns) {
  for (const char* variant : {"pe2d", "camera-ray", "lidar-ray", "oracle-point"}) {
    const std::vector<std::string> base = {"encode", "--variant", variant, "--seed", "5", "--stride", "64",
                                           "--channels", "16", "--hidden", "32", "--bins", "lid:1:61:8"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out-dir", path("a")});
    b.insert(b.end(), {"--out-dir", path("b")});
    ASSERT_EQ(run(a), cli::kExitOk) << variant;
    ASSERT_EQ(run(b), cli::kExitOk) << variant;
    int files = 0;
    for (const auto& e : fs::directory_iterator(path("a"))) {
      const std::string name = e.path().filename().string();
      const std::string bytes = read_file(e.path().string());
      EXPECT_EQ(bytes, read_file(path("b/" + name))) << variant << " " << name;
      EXPECT_EQ(decode_pe_grid(bytes).channels(), 16);
      ++files;
    }
    EXPECT_EQ(files, 6);
    fs::remove_all(path("a"));
    fs::remove_all(path("b"));
  }
}

TEST_F(CliTest, EnvironmentSeedOverridesFlag) {
  ASSERT_EQ(run({"render", "--out-dir", path("flag7"), "--seed", "7", "--stride", "64"}), cli::kExitOk);
  ASSERT_EQ(run({"render", "--out-dir", path("flag1"), "--seed", "1", "--stride", "64"}), cli::kExitOk);
  setenv("PE3D_SEED", "7", 1);
  ASSERT_EQ(run({"render", "--out-dir", path("env"), "--seed", "1", "--stride", "64"}), cli::kExitOk);
  EXPECT_EQ(read_file(path("env/annotations.json")), read_file(path("flag7/annotations.json")));
  EXPECT_NE(read_file(path("flag1/annotations.json")), read_file(path("flag7/annotations.json")));
  setenv("PE3D_SEED", "abc", 1);
  EXPECT_EQ(run({"render", "--out-dir", path("bad")}), cli::kExitData);
}

TEST_F(CliTest, SimilarityWritesCsvAndPgm) {
  int rc = -1;
  const std::string out = run_stdout({"similarity", "--variant", "oracle-point", "--channels", "16", "--hidden", "32",
                                      "--ref", "auto-object", "--out", path("sim")},
                                     &rc);
  ASSERT_EQ(rc, cli::kExitOk);
  EXPECT_EQ(out.rfind("reference ", 0), 0u);
  EXPECT_NE(out.find("margin"), std::string::npos);
  const std::string csv = read_file(path("sim.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "view,u,v,similarity");
  for (int v = 0; v < 6; ++v) EXPECT_EQ(read_file(path("sim_view" + std::to_string(v) + ".pgm")).substr(0, 2), "P5");
  EXPECT_EQ(run({"similarity", "--ref", "0:999:0", "--out", path("bad")}), cli::kExitData);
}

TEST_F(CliTest, DiscrepancySweepAtTenMeters) {
  int rc = -1;
  const std::string out =
      run_stdout({"discrepancy-sweep", "--alpha", "45", "--dlc", "1", "--delta", "0.7", "--d-range", "10:10:1"}, &rc);
  ASSERT_EQ(rc, cli::kExitOk);
  std::istringstream in(out);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "d,Dis");
  EXPECT_EQ(row.substr(0, 3), "10,");
  EXPECT_NEAR(std::stod(row.substr(3)), 9.555002330935431638e-5, 1e-15);
  ASSERT_EQ(run({"discrepancy-sweep", "--d-range", "1:60:60", "--out", path("sweep.csv")}), cli::kExitOk);
  const std::string csv = read_file(path("sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 61);
}

TEST_F(CliTest, AblateProducesOneRowPerCellAndSeed) {
  ASSERT_EQ(run({"ablate", "--suite", "table2", "--seeds", "3", "--steps", "2", "--out", path("t2.csv")}),
            cli::kExitOk);
  const std::string csv = read_file(path("t2.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,params,seed,steps,final_error_m");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 15);
  EXPECT_EQ(run({"ablate", "--suite", "table9"}), cli::kExitData);
}

TEST_F(CliTest, GradcheckPasses) {
  int rc = -1;
  const std::string out = run_stdout({"gradcheck", "--seed", "7", "--instances", "5"}, &rc);
  EXPECT_EQ(rc, cli::kExitOk);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 5);
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace pe3d
