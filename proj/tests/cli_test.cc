/* Copyright 2026 The Tegl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tegl/dataset.hpp"
#include "tegl/manifest.hpp"

namespace tegl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result tool(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const char* base = std::getenv("TEGL_TEST_TMP");
    root_ = fs::path(base ? base : fs::temp_directory_path().string()) / "cli";
    fs::remove_all(root_);
    fs::create_directories(root_ / "data");
    save_raw_dataset(testing::toy_bars28(8, 10, 1), root_ / "data/train.tgrd");
    save_raw_dataset(testing::toy_bars28(3, 10, 2), root_ / "data/test.tgrd");
  }

  static std::vector<std::string> train_args(const std::string& out, const std::string& poison) {
    std::vector<std::string> a{"train", "--data", (root_ / "data").string(), "--epochs", "2", "--lr-step", "1",
                               "--batch", "32", "--poison", poison, "--seed", "5", "--out", (root_ / out).string()};
    if (poison != "none") {
      a.insert(a.end(), {"--target", "3"});
    }
    return a;
  }

  static std::vector<std::string> scan_args(const std::string& model_dir, const std::string& out) {
    return {"scan", "--model", (root_ / model_dir / "model.tegl").string(), "--iterations", "40",
            "--out", (root_ / out).string()};
  }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, UsageExitCodes) {
  EXPECT_EQ(tool({}).code, cli::kExitUsage);
  EXPECT_EQ(tool({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(tool({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(tool({"train", "--out", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(tool({"train", "--data", "d", "--out", "x", "--poison", "sometimes"}).code, cli::kExitUsage);
  auto a = train_args("never", "agnostic");
  a.resize(a.size() - 2);
  EXPECT_EQ(tool(a).code, cli::kExitUsage);
  EXPECT_EQ(tool({"attack-shape", "--data", "d", "--out", "x", "--target", "1", "--p-max", "0.5"}).code,
            cli::kExitUsage);
  EXPECT_EQ(tool({"scan", "--model", "m", "--json", "--table"}).code, cli::kExitUsage);
  EXPECT_EQ(tool({"scan", "--model", "m", "--l-sep", "zero"}).code, cli::kExitUsage);
}

TEST_F(CliTest, RuntimeFailuresExitOne) {
  const Result r = tool({"scan", "--model", (root_ / "missing.tegl").string(), "--out", (root_ / "m").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_FALSE(r.err.empty());
  const Result d = tool({"train", "--data", (root_ / "nodata").string(), "--out", (root_ / "n").string()});
  EXPECT_EQ(d.code, cli::kExitFailure);
}

TEST_F(CliTest, CleanTrainingRecordsNoTrigger) {
  ASSERT_EQ(tool(train_args("clean", "none")).code, cli::kExitOk);
  for (const char* f : {"model.tegl", "train_log.jsonl", "summary.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "clean" / f)) << f;
  }
  const RunManifest m = read_manifest(root_ / "clean/manifest.json");
  EXPECT_EQ(m.command, "train");
  EXPECT_EQ(m.seed, 5u);
  EXPECT_FALSE(m.configs.at("recipe").contains("poison"));
  EXPECT_EQ(m.configs.at("recipe").at("attack"), "none");
  const json summary = read_json(root_ / "clean/summary.json");
  EXPECT_GT(summary.at("clean_accuracy").get<double>(), 0.5);
}

TEST_F(CliTest, ScanJsonAndTableAgree) {
  ASSERT_EQ(tool(train_args("agn", "agnostic")).code, cli::kExitOk);
  EXPECT_TRUE(read_json(root_ / "agn/manifest.json").at("configs").at("recipe").contains("poison"));
  const Result j = tool(scan_args("agn", "agn.json"));
  ASSERT_EQ(j.code, cli::kExitOk) << j.err;
  auto table_args = scan_args("agn", "agn.table");
  table_args.push_back("--table");
  const Result t = tool(table_args);
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;

  const json report = json::parse(j.out);
  std::map<std::string, std::string> rows;
  std::istringstream lines(t.out);
  for (std::string line; std::getline(lines, line);) {
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    rows[key] = value;
  }
  EXPECT_EQ(std::stod(rows.at("M_trojaned")), report.at("M_trojaned").get<double>());
  EXPECT_EQ(std::stod(rows.at("M_trojaned_mod")), report.at("M_trojaned_mod").get<double>());
  EXPECT_EQ(std::stoi(rows.at("predicted_target")), report.at("predicted_target").get<int>());
  EXPECT_EQ(std::stoul(rows.at("L_sep")), 5u);
  EXPECT_EQ(read_json(root_ / "agn.json/report.json").at("wall_ms"), 0.0);

  auto rule = scan_args("agn", "agn.rule");
  rule.insert(rule.end(), {"--l-sep", "auto"});
  const Result r = tool(rule);
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(json::parse(r.out).at("L_sep"), 4);
}

TEST_F(CliTest, ReplayIsBitExact) {
  ASSERT_EQ(tool(train_args("rep", "agnostic")).code, cli::kExitOk);
  const Result t = tool({"replay", (root_ / "rep/manifest.json").string()});
  EXPECT_EQ(t.code, cli::kExitOk) << t.out << t.err;
  EXPECT_EQ(t.out.find("DIFFERS"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "rep.replay/model.tegl"));

  ASSERT_EQ(tool(scan_args("rep", "rep.scan")).code, cli::kExitOk);
  const Result s = tool({"replay", (root_ / "rep.scan/manifest.json").string()});
  EXPECT_EQ(s.code, cli::kExitOk) << s.out << s.err;

  // A tampered output no longer matches.
  std::ofstream(root_ / "rep.scan/report.json", std::ios::app) << " ";
  EXPECT_EQ(tool({"replay", (root_ / "rep.scan/manifest.json").string(), "--out",
                  (root_ / "rep.scan.again").string()})
                .code,
            cli::kExitFailure);
}

TEST_F(CliTest, CorpusEvaluateReplay) {
  const std::string corpus = (root_ / "corpus").string();
  const Result b = tool({"corpus-build", "--data", (root_ / "data").string(), "--clean", "3", "--agnostic", "3",
                         "--epochs", "1", "--lr-step", "1", "--batch", "32", "--jobs", "2", "--seed", "9",
                         "--out", corpus});
  ASSERT_EQ(b.code, cli::kExitOk) << b.err;
  ASSERT_TRUE(fs::exists(root_ / "corpus/corpus.jsonl"));
  const Result e = tool({"evaluate", "--corpus", corpus + "/corpus.jsonl", "--min-per-class", "3", "--repeats",
                         "2", "--iterations", "30", "--jobs", "2"});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  EXPECT_EQ(e.out.rfind("setting,clean,trojaned,repeats,tpr,fpr,target_accuracy\n", 0), 0u);
  for (const char* f : {"reports.jsonl", "scores.jsonl", "eval.json", "eval.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "corpus/eval" / f)) << f;
  }
  const Result r = tool({"replay", corpus + "/eval/manifest.json"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out << r.err;
  EXPECT_EQ(tool({"evaluate", "--corpus", corpus + "/corpus.jsonl", "--iterations", "30", "--out",
                  (root_ / "small").string()})
                .code,
            cli::kExitFailure);
}

}  // namespace
}  // namespace tegl
