//
// Copyright 2026 The dpbf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//


#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpbf/bench.h"
#include "dpbf/checkpoint.h"
#include "dpbf/config.h"
#include "dpbf/train.h"
#include "gtest/gtest.h"
#include "json.hpp"

namespace dpbf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult RunCli(const std::string& args) {
  const std::string cmd = std::string(DPBF_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string FirstLine(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("dpbf_cli_") + info->name() + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path WriteConfig(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

const char* kBitFitConfig = R"({
  "task": {"kind": "blobs", "n": 300, "dims": 2, "classes": 2,
           "separation": 4},
  "network": {"layers": [{"type": "linear", "in": 2, "out": 8},
                         {"type": "relu"},
                         {"type": "linear", "in": 8, "out": 2}]},
  "mode": "bitfit",
  "epochs": 2,
  "batch_size": 30,
  "privacy": {"eps": 3, "clipping": "autos", "R": 1},
  "optimizer": {"kind": "adam", "lr": 0.01},
  "seed": 7
})";

TEST_F(CliTest, AccountMatchesKnownValue) {
  const RunResult r =
      RunCli("account --q 1 --sigma 1 --steps 1 --delta 1e-5");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const json j = json::parse(r.output);
  EXPECT_NEAR(j["eps"].get<double>(), 5.3026, 0.01);
  EXPECT_EQ(j["alpha"].get<int>(), 6);
}

TEST_F(CliTest, CalibrateHitsTarget) {
  const RunResult r =
      RunCli("calibrate --eps 2 --q 0.01 --steps 1000 --delta 1e-5");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const json j = json::parse(r.output);
  EXPECT_LE(j["eps"].get<double>(), 2.0);
  EXPECT_GT(j["sigma"].get<double>(), 0.0);
}

TEST_F(CliTest, MissingNetworkExitsWithConfigError) {
  json c = json::parse(kBitFitConfig);
  c.erase("network");
  const fs::path p = WriteConfig("bad.json", c.dump());
  const RunResult r = RunCli("--config " + p.string() + " --out " +
                          (dir_ / "out").string() + " train");
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_NE(r.output.find("/network"), std::string::npos) << r.output;
}

TEST(ShippedConfigTest, AllParse) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(DPBF_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(ResolvePrivacy(LoadRunConfig(e.path().string())))
        << e.path();
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST_F(CliTest, UnknownSubcommandFails) {
  const RunResult r = RunCli("no-such-command");
  EXPECT_NE(r.exit_code, 0);
}

TEST_F(CliTest, BitFitTrainLeavesWeightsAtInit) {
  const fs::path p = WriteConfig("c.json", kBitFitConfig);
  const fs::path out = dir_ / "out";
  const RunResult r =
      RunCli("--config " + p.string() + " --out " + out.string() + " train");
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const RunConfig config = LoadRunConfig(p.string());
  const Network init = BuildNetwork(config);
  const std::vector<NamedTensor> saved =
      DecodeCheckpoint(ReadFile(out / "checkpoint.bin"));
  const auto params = init.Parameters();
  ASSERT_EQ(saved.size(), params.size());
  bool some_bias_moved = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ASSERT_EQ(saved[i].name, params[i].name);
    const auto a = saved[i].value.data();
    const auto b = params[i].tensor->data();
    ASSERT_EQ(a.size(), b.size());
    const bool equal = std::equal(a.begin(), a.end(), b.begin());
    if (params[i].kind == ParamKind::kWeight) {
      EXPECT_TRUE(equal) << params[i].name;
    } else if (!equal) {
      some_bias_moved = true;
    }
  }
  EXPECT_TRUE(some_bias_moved);
}

TEST_F(CliTest, TrainWritesReportAndRespectsTarget) {
  const fs::path p = WriteConfig("c.json", kBitFitConfig);
  const fs::path out = dir_ / "out";
  ASSERT_EQ(RunCli("--config " + p.string() + " --out " + out.string() + " train")
                .exit_code,
            0);
  const json report = json::parse(ReadFile(out / "privacy.json"));
  EXPECT_TRUE(report["private"].get<bool>());
  EXPECT_LE(report["eps"].get<double>(), 3.0);
  EXPECT_EQ(report["target_eps"].get<double>(), 3.0);
  EXPECT_EQ(report["steps"].get<int>(), 20);
  EXPECT_EQ(FirstLine(ReadFile(out / "metrics.csv")), kMetricsHeader);
}

TEST_F(CliTest, TrainIsDeterministic) {
  const fs::path p = WriteConfig("c.json", kBitFitConfig);
  const fs::path a = dir_ / "a";
  const fs::path b = dir_ / "b";
  ASSERT_EQ(
      RunCli("--config " + p.string() + " --out " + a.string() + " train")
          .exit_code,
      0);
  ASSERT_EQ(
      RunCli("--config " + p.string() + " --out " + b.string() + " train")
          .exit_code,
      0);
  EXPECT_EQ(ReadFile(a / "metrics.csv"), ReadFile(b / "metrics.csv"));
  EXPECT_EQ(ReadFile(a / "checkpoint.bin"), ReadFile(b / "checkpoint.bin"));
  EXPECT_EQ(ReadFile(a / "privacy.json"), ReadFile(b / "privacy.json"));

  // A different seed changes the run.
  const fs::path c = dir_ / "c";
  ASSERT_EQ(RunCli("--config " + p.string() + " --seed 8 --out " + c.string() +
                " train")
                .exit_code,
            0);
  EXPECT_NE(ReadFile(a / "checkpoint.bin"), ReadFile(c / "checkpoint.bin"));
}

TEST_F(CliTest, ComplexityTable) {
  const RunResult r = RunCli(
      "complexity --B 2 --T 3 --p 4 --d 5 --r 1 --methods nondp-full");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::istringstream in(r.output);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "method,layer_index,B,T,p,d,r,time_total,space_total,n_backprops,"
            "forward_hook,time_forward,time_base,time_extra,space_forward,"
            "space_base,space_extra");
  std::vector<std::string> cells;
  std::istringstream rs(row);
  for (std::string cell; std::getline(rs, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 17u);
  EXPECT_EQ(cells[0], "nondp-full");
  EXPECT_EQ(std::stod(cells[12]), 240.0);
}

TEST_F(CliTest, ParamReport) {
  const RunResult r = RunCli(
      R"(param-report --network '[{"type":"linear","in":999,"out":10}]')");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  std::istringstream in(r.output);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "layer,total,bias,fraction");
  EXPECT_NE(row.find("10000,10,0.001"), std::string::npos) << row;
}

TEST_F(CliTest, BenchScalingWritesCsv) {
  const fs::path out = dir_ / "bench";
  const RunResult r = RunCli(
      "--out " + out.string() +
      " bench-scaling --methods dp-bias --T 4,8 --B 2 --d 4 --p 4 "
      "--reps 1 --warmups 0");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  bool found = false;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() != ".csv") continue;
    found = true;
    EXPECT_EQ(FirstLine(ReadFile(e.path())), kBenchHeader);
  }
  EXPECT_TRUE(found);
}

}  // namespace
}  // namespace dpbf
