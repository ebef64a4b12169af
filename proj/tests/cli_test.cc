// Copyright 2026 The ConvForge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "convforge/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "convforge/corpus.hpp"
#include "convforge/generators.hpp"
#include "gtest/gtest.h"
#include "json.hpp"

namespace convforge {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("convforge_cli_" + std::string(
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  fs::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  fs::path dir_;
};

TEST_F(CliTest, StatsPrintsAverageTurns) {
  write("one.jsonl",
        R"({"id":"a","summary":"s","turns":[{"speaker":"person_0","text":"hi there"},{"speaker":"person_1","text":"yo"},{"speaker":"person_0","text":"ok then bye"}]})"
        "\n");
  const auto r = run({"stats", "--input", path("one.jsonl").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("avg_turns: 3.00"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("avg_tokens_per_turn: 2.00"), std::string::npos) << r.out;
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"stats", "--input", "x", "--bogus"}).code, 2);
  EXPECT_EQ(run({"stats", "--input", "x", "--backend", "gpt"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, BadInputExitsTwo) {
  write("bad.jsonl", "{\"id\":\"a\",\"turns\":[]}\n");
  const auto r = run({"stats", "--input", path("bad.jsonl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  write("cfg.json", R"({"ppo": {"steps": -1}})");
  EXPECT_EQ(run({"synth", "--output", path("s.jsonl").string(), "--config", path("cfg.json").string()}).code, 2);
  write("cfg2.json", R"({"mystery": 1})");
  EXPECT_EQ(run({"synth", "--output", path("s.jsonl").string(), "--config", path("cfg2.json").string()}).code, 2);
}

TEST_F(CliTest, EvaluateNamesMissingIds) {
  write("refs.jsonl",
        R"({"id":"a","summary":"s","turns":[{"speaker":"person_0","text":"hi"}]})"
        "\n"
        R"({"id":"b","summary":"s","turns":[{"speaker":"person_0","text":"yo"}]})"
        "\n");
  write("gen.jsonl",
        R"({"id":"a#gen","mode":"sl","summary":"s","turns":[{"speaker":"person_0","text":"hi"}],"well_formed":true,"controls":null,"raw_text":"<person_0> hi"})"
        "\n"
        R"({"id":"zz#gen","mode":"sl","summary":"s","turns":[{"speaker":"person_0","text":"hi"}],"well_formed":true,"controls":null,"raw_text":"<person_0> hi"})"
        "\n");
  const auto r = run({"evaluate", "conversations", "--generated", path("gen.jsonl").string(), "--references",
                      path("refs.jsonl").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("zz"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("b"), std::string::npos) << r.err;
}

TEST_F(CliTest, PreprocessAnonymizesSamsumDialogue) {
  write("raw.jsonl",
        R"j({"id":"13818513","summary":"Amanda baked cookies and will bring Jerry some tomorrow.","dialogue":"Amanda: I baked  cookies. Do you want some?\r\nJerry: Sure!\r\nAmanda: I'll bring you tomorrow :-)"})j"
        "\n");
  const auto r = run({"preprocess", "--input", path("raw.jsonl").string(), "--output", path("clean.jsonl").string(),
                      "--names", path("names.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = load_dataset(path("clean.jsonl"), Split::kTrain);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].summary, "person_0 baked cookies and will bring person_1 some tomorrow.");
  EXPECT_EQ(recs[0].conversation->turns()[1].speaker, "person_1");
  const auto names = nlohmann::json::parse(slurp(path("names.jsonl")));
  EXPECT_EQ(names["names"]["Amanda"], "person_0");
}

TEST_F(CliTest, TrainGenerateEvaluatePipeline) {
  ASSERT_EQ(run({"synth", "--n", "30", "--output", path("train.jsonl").string(), "--seed", "4"}).code, 0);
  auto r = run({"train-sl", "--train", path("train.jsonl").string(), "--out", path("sl").string(), "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("sl") / "train_stats.json"));
  r = run({"generate", "--model", path("sl").string(), "--input", path("train.jsonl").string(), "--output",
           path("gen.jsonl").string(), "--mode", "sl", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_generated(path("gen.jsonl")).size(), 30u);
  r = run({"evaluate", "conversations", "--generated", path("gen.jsonl").string(), "--references",
           path("train.jsonl").string(), "--out", path("eval.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(path("eval.json")))["n_pairs"], 30);

  r = run({"train-cn", "--train", path("train.jsonl").string(), "--out", path("cn").string(), "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"generate", "--model", path("cn").string(), "--input", path("train.jsonl").string(), "--output",
           path("gen_cn.jsonl").string(), "--mode", "cn"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& g : load_generated(path("gen_cn.jsonl"))) {
    ASSERT_TRUE(g.controls_used.has_value());
    EXPECT_EQ(g.conversation.size(), g.controls_used->size());
  }

  r = run({"train-summarizer", "--train", path("train.jsonl").string(), "--generated",
           path("gen_cn.jsonl").string(), "--out", path("summ").string(), "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"evaluate", "summaries", "--summarizer", path("summ").string(), "--test", path("train.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("ROUGE-2"), std::string::npos);

  r = run({"train-rl", "--train", path("train.jsonl").string(), "--policy", path("sl").string(), "--summarizer",
           path("summ").string(), "--out", path("rl").string(), "--steps", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(path("rl") / "trace.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(CliTest, AugmentWritesReportAndIsRepeatable) {
  ASSERT_EQ(run({"synth", "--n", "40", "--output", path("train.jsonl").string(), "--seed", "1"}).code, 0);
  ASSERT_EQ(run({"synth", "--n", "8", "--output", path("test.jsonl").string(), "--seed", "2", "--split", "test",
                 "--prefix", "tst"})
                .code,
            0);
  write("cfg.json", R"({"generator_train": {"epochs": 2}, "summarizer_train": {"epochs": 2}, "augment": {"x_percent": 50}})");
  auto augment = [&](const std::string& out) {
    return run({"augment", "--train", path("train.jsonl").string(), "--test", path("test.jsonl").string(), "--out",
                path(out).string(), "--method", "cn", "--config", path("cfg.json").string(), "--seed", "5"});
  };
  auto r = augment("a");
  ASSERT_EQ(r.code, 0) << r.err;
  r = augment("b");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = nlohmann::json::parse(slurp(path("a") / "report.json"));
  EXPECT_EQ(rep["dataset_sizes"]["augmented"], 60);
  EXPECT_EQ(rep["audit"]["passed"], true);
  EXPECT_EQ(rep["plan"]["x_percent"], 50.0);
  EXPECT_EQ(slurp(path("a") / "generated.jsonl"), slurp(path("b") / "generated.jsonl"));
  // Checkpoint paths differ per output directory; everything else must match.
  auto strip = [](nlohmann::json j) {
    j.erase("artifacts");
    return j.dump();
  };
  EXPECT_EQ(strip(rep), strip(nlohmann::json::parse(slurp(path("b") / "report.json"))));
}

}  // namespace
}  // namespace convforge
