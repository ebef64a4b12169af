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

#include "convforge/generators.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "convforge/errors.hpp"
#include "gtest/gtest.h"
#include "testing/toy_models.hpp"

namespace convforge {
namespace {

using testing_util::random_token_lm;
using testing_util::toy_vocab;
using testing_util::ToyLM;

int toy_id(std::string_view s) {
  const auto v = toy_vocab();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == s) return static_cast<int>(i);
  }
  return -1;
}

// Emits "hi" then a structural token, forever.
ToyLM chatty_lm() {
  const int hi = toy_id("hi");
  const int turn = toy_id(surface(SpecialToken::kTurn));
  return ToyLM([=](std::span<const int> ctx) {
    std::vector<double> z(toy_vocab().size(), -20.0);
    z[static_cast<std::size_t>(!ctx.empty() && ctx.back() == hi ? turn : hi)] = 20.0;
    return z;
  });
}

ToyLM mute_lm() {
  const int turn = toy_id(surface(SpecialToken::kTurn));
  return ToyLM([=](std::span<const int>) {
    std::vector<double> z(toy_vocab().size(), -20.0);
    z[static_cast<std::size_t>(turn)] = 20.0;
    return z;
  });
}

SamplingParams loose_params(std::uint64_t seed) {
  SamplingParams p;
  p.min_length = 0;
  p.max_length = 120;
  p.seed = seed;
  return p;
}

TEST(GenerationModeTest, NamesRoundTrip) {
  for (auto m : {GenerationMode::kSL, GenerationMode::kRLPolicy, GenerationMode::kCN}) {
    EXPECT_EQ(parse_generation_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_generation_mode("beam"), ValidationError);
}

TEST(GenerateSLTest, RandomModelNeverThrows) {
  int well_formed = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const ToyLM lm = random_token_lm(s);
    GeneratedConversation g;
    ASSERT_NO_THROW(g = generate_sl(lm, "person_0 is late.", loose_params(s)));
    EXPECT_EQ(g.mode, GenerationMode::kSL);
    EXPECT_EQ(g.summary, "person_0 is late.");
    if (g.well_formed) {
      ++well_formed;
      EXPECT_FALSE(g.conversation.empty());
    }
  }
  EXPECT_LT(well_formed, 200);
}

TEST(GenerateSLTest, EmptySummaryRejected) {
  const ToyLM lm = chatty_lm();
  EXPECT_THROW(generate_sl(lm, "  ", loose_params(0)), ValidationError);
}

TEST(InferenceControlsTest, CountdownAndSpeakers) {
  const std::vector<std::string> speakers = {"person_0", "person_1", "person_2"};
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto c = sample_inference_controls({4, 15}, speakers, s);
    ASSERT_GE(c.size(), 4u);
    ASSERT_LE(c.size(), 15u);
    EXPECT_NO_THROW(validate_countdown(c));
    EXPECT_EQ(c.front().turns_to_go, static_cast<int>(c.size()));
    EXPECT_EQ(c.back().turns_to_go, 1);
    for (const auto& x : c) EXPECT_NE(std::find(speakers.begin(), speakers.end(), x.next_speaker), speakers.end());
  }
  EXPECT_EQ(sample_inference_controls({4, 15}, speakers, 9), sample_inference_controls({4, 15}, speakers, 9));
  EXPECT_THROW(sample_inference_controls({5, 4}, speakers, 0), ValidationError);
  EXPECT_THROW(sample_inference_controls({4, 15}, {}, 0), ValidationError);
  const std::vector<std::string> bad = {"Amanda"};
  EXPECT_THROW(sample_inference_controls({4, 15}, bad, 0), ValidationError);
}

double chi_square(const std::vector<double>& observed) {
  double total = 0.0;
  for (double o : observed) total += o;
  const double expected = total / static_cast<double>(observed.size());
  double chi = 0.0;
  for (double o : observed) chi += (o - expected) * (o - expected) / expected;
  return chi;
}

TEST(InferenceControlsTest, UniformMarginals) {
  const std::vector<std::string> speakers = {"person_0", "person_1"};
  std::vector<double> n_count(12, 0.0), speaker_count(2, 0.0), bucket_count(3, 0.0);
  for (std::uint64_t s = 0; s < 6000; ++s) {
    const auto c = sample_inference_controls({4, 15}, speakers, mix_seed(77, s));
    n_count[c.size() - 4] += 1;
    for (const auto& x : c) {
      speaker_count[x.next_speaker == "person_0" ? 0 : 1] += 1;
      bucket_count[static_cast<std::size_t>(x.next_length)] += 1;
    }
  }
  // 0.001 critical values for 11, 1 and 2 degrees of freedom.
  EXPECT_LT(chi_square(n_count), 31.264);
  EXPECT_LT(chi_square(speaker_count), 10.828);
  EXPECT_LT(chi_square(bucket_count), 13.816);
}

TEST(SpeakersForSummaryTest, CollectsAndPads) {
  EXPECT_EQ(speakers_for_summary("person_3 asks person_1's dog."),
            (std::vector<std::string>{"person_1", "person_3"}));
  EXPECT_EQ(speakers_for_summary("nobody here"), (std::vector<std::string>{"person_0", "person_1"}));
  EXPECT_EQ(speakers_for_summary("person_2 waits"), (std::vector<std::string>{"person_0", "person_2"}));
}

TEST(GenerateCNTest, FollowsControlsExactly) {
  const ToyLM lm = chatty_lm();
  const std::vector<std::string> speakers = {"person_0", "person_1", "person_2"};
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto controls = sample_inference_controls({4, 15}, speakers, s);
    const auto g = generate_cn(lm, "person_0 and person_2 meet.", controls, loose_params(s));
    ASSERT_EQ(g.conversation.size(), controls.size());
    for (std::size_t i = 0; i < controls.size(); ++i) {
      EXPECT_EQ(g.conversation.turns()[i].speaker, controls[i].next_speaker);
      EXPECT_EQ(g.conversation.turns()[i].text, "hi");
    }
    EXPECT_TRUE(g.well_formed);
    EXPECT_EQ(g.fallback_turns, 0);
    EXPECT_EQ(g.mode, GenerationMode::kCN);
    EXPECT_EQ(g.controls_used, controls);
    EXPECT_EQ(g.raw_text, linearize(g.conversation));
  }
}

TEST(GenerateCNTest, EmptyUtterancesFallBack) {
  const ToyLM lm = mute_lm();
  const std::vector<std::string> speakers = {"person_0", "person_1"};
  const auto controls = sample_inference_controls({5, 5}, speakers, 3);
  const auto g = generate_cn(lm, "a summary", controls, loose_params(1));
  ASSERT_EQ(g.conversation.size(), 5u);
  EXPECT_EQ(g.fallback_turns, 5);
  for (const auto& t : g.conversation.turns()) EXPECT_EQ(t.text, kFallbackUtterance);
}

TEST(GenerateCNTest, RandomModelKeepsTurnCount) {
  const std::vector<std::string> speakers = {"person_0", "person_1"};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const ToyLM lm = random_token_lm(s);
    const auto controls = sample_inference_controls({4, 15}, speakers, s);
    const auto g = generate_cn(lm, "person_1 is late", controls, loose_params(s));
    EXPECT_EQ(g.conversation.size(), controls.size());
    for (const auto& t : g.conversation.turns()) EXPECT_FALSE(t.text.empty());
  }
}

TEST(GenerateCNTest, RejectsBrokenCountdown) {
  const ToyLM lm = chatty_lm();
  std::vector<ControlState> controls = {{2, "person_0", LengthBucket::kShort}, {2, "person_1", LengthBucket::kShort}};
  EXPECT_THROW(generate_cn(lm, "s", controls, loose_params(0)), ValidationError);
}

TEST(GenerateTest, RequestValidationAndId) {
  const ToyLM lm = chatty_lm();
  GenerationRequest req;
  req.id = "d7#gen";
  req.summary = "person_0 says hi";
  req.mode = GenerationMode::kCN;
  req.params = loose_params(4);
  EXPECT_THROW(generate(lm, req), ValidationError);
  req.cn_controls = std::vector<ControlState>{{1, "person_0", LengthBucket::kShort}};
  const auto g = generate(lm, req);
  EXPECT_EQ(g.conversation.id(), "d7#gen");
  req.mode = GenerationMode::kSL;
  EXPECT_THROW(generate(lm, req), ValidationError);
}

TEST(GeneratedJsonTest, JsonlRoundTrip) {
  const ToyLM lm = chatty_lm();
  std::vector<GeneratedConversation> items;
  GenerationRequest req;
  req.summary = "person_0 says hi";
  req.params = loose_params(2);
  req.id = "a#gen";
  req.mode = GenerationMode::kCN;
  req.cn_controls = sample_inference_controls({4, 6}, speakers_for_summary(req.summary), 5);
  items.push_back(generate(lm, req));
  req.id = "b#gen";
  req.mode = GenerationMode::kSL;
  req.cn_controls.reset();
  items.push_back(generate(lm, req));

  const auto path = std::filesystem::temp_directory_path() / "convforge_generated_test.jsonl";
  write_generated(path, items);
  const auto back = load_generated(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].conversation, items[i].conversation);
    EXPECT_EQ(back[i].well_formed, items[i].well_formed);
    EXPECT_EQ(back[i].raw_text, items[i].raw_text);
    EXPECT_EQ(back[i].mode, items[i].mode);
    EXPECT_EQ(back[i].controls_used, items[i].controls_used);
    EXPECT_EQ(back[i].summary, items[i].summary);
  }
  EXPECT_THROW(control_from_json(nlohmann::json{{"turns_to_go", 1}, {"speaker", "person_0"}, {"length", "huge"}}),
               ValidationError);
}

}  // namespace
}  // namespace convforge
