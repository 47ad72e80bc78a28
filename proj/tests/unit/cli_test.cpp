// Copyright 2026 The SiteGuard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "siteguard/calibration.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kFixtures{SITEGUARD_FIXTURES};
const std::string kCli{SITEGUARD_CLI};

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  Run r;
  const std::string cmd = kCli + " " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("siteguard_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_F(CliTest, CalibrateWritesLoadableProfile) {
  const auto pts = write("pts.txt", "# BL BR TR TL\n140 440\n500 440\n420 300\n220 300\n");
  const auto out = dir_ / "cal.json";
  const auto r = run("--json calibrate --points " + pts.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["edge_length_ft"], 6.0);
  const auto p = siteguard::load_calibration(out);
  EXPECT_DOUBLE_EQ(p.homography(0, 2), j["homography"][0][2].get<double>());
}

TEST_F(CliTest, CalibrateJsonPointsWithScale) {
  const auto pts = write("pts.json", R"({"corners": [[140,440],[500,440],[420,300],[220,300]], "pixels_per_foot": 50})");
  const auto r = run("--json calibrate --points " + pts.string() + " --edge-ft 3 --out " + (dir_ / "c.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["edge_length_ft"], 3.0);
  EXPECT_EQ(j["pixels_per_foot"], 50.0);
}

TEST_F(CliTest, CalibrateCollinearExitsTwo) {
  const auto pts = write("pts.txt", "0 0\n100 100\n200 200\n0 300\n");
  const auto r = run("--json calibrate --points " + pts.string() + " --out " + (dir_ / "c.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["error"], "DegenerateConfiguration");
  EXPECT_FALSE(fs::exists(dir_ / "c.json"));
}

TEST_F(CliTest, UsageErrorIsJsonWithExitTwo) {
  auto r = run("--json calibrate");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["error"], "UsageError");
  r = run("--json frobnicate");
  EXPECT_EQ(r.code, 2);
  r = run("");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, MissingInputIsRuntimeError) {
  const auto r = run("--json eval --preds " + (dir_ / "none.jsonl").string() + " --gt " + dir_.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.out)["error"], "Io");
}

TEST_F(CliTest, EvalPrintsPointNine) {
  const auto preds = (kFixtures / "eval" / "preds.jsonl").string();
  const auto gt = (kFixtures / "eval" / "gt").string();
  auto r = run("eval --preds " + preds + " --gt " + gt);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("accuracy 0.9000"), std::string::npos) << r.out;
  r = run("--json eval --preds " + preds + " --gt " + gt);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out)["accuracy"].get<double>(), 0.9);
}

TEST_F(CliTest, ReplayMatchesGoldenLogs) {
  const auto r = run("--json replay --check --fixtures " + (kFixtures / "replay").string() + " --out " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.size(), 4u);
  for (const auto& c : j) EXPECT_TRUE(c["matches_golden"].get<bool>()) << c["case"];
  EXPECT_EQ(j[1]["case"], "case2");
  EXPECT_EQ(j[1]["distance_events"], 0);
}

TEST_F(CliTest, AugmentReachesTargetDeterministically) {
  const auto voc = (kFixtures / "voc").string();
  const auto a = run("--json augment --in " + voc + " --target 30 --seed 11 --out " + (dir_ / "a").string());
  const auto b = run("--json augment --in " + voc + " --target 30 --seed 11 --out " + (dir_ / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0);
  const auto j = json::parse(a.out);
  EXPECT_EQ(j["before"], (json{{"with_mask", 39}, {"without_mask", 14}, {"mask_worn_incorrect", 4}}));
  EXPECT_EQ(j["plan"]["needed"], (json{{"with_mask", 0}, {"without_mask", 16}, {"mask_worn_incorrect", 26}}));
  EXPECT_EQ(j["planned_total"], 99);
  for (const auto& [k, v] : j["after"].items()) EXPECT_GE(v.get<int>(), 30) << k;
  EXPECT_EQ(slurp(dir_ / "a" / "manifest.jsonl"), slurp(dir_ / "b" / "manifest.jsonl"));
  const auto images = std::distance(fs::directory_iterator(dir_ / "a" / "images"), fs::directory_iterator{});
  EXPECT_EQ(static_cast<std::size_t>(images), 20u + j["generated_images"].get<std::size_t>());
}

TEST_F(CliTest, AugmentDryRunPlanOnly) {
  const auto r = run("--json augment --dry-run --in " + (kFixtures / "voc").string() + " --target 1100");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["plan"]["total_target"], 3300);
  EXPECT_EQ(j["planned_total"], 3300);
  EXPECT_FALSE(j.contains("after"));
}

TEST_F(CliTest, SplitIsSeededEightyTwenty) {
  const auto voc = (kFixtures / "voc").string();
  const auto a = run("--json split --in " + voc + " --ratio 0.8 --seed 5 --out " + dir_.string());
  const auto b = run("--json split --in " + voc + " --ratio 0.8 --seed 5");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto j = json::parse(a.out);
  EXPECT_EQ(j["train"].size(), 16u);
  EXPECT_EQ(j["test"].size(), 4u);
  EXPECT_TRUE(fs::exists(dir_ / "train.txt"));
  EXPECT_EQ(run("--json split --in " + voc + " --ratio 1.5").code, 2);
}
