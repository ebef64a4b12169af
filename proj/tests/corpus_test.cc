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

#include "convforge/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include "convforge/errors.hpp"
#include "convforge/text.hpp"
#include "gtest/gtest.h"

namespace convforge {
namespace {

namespace fs = std::filesystem;

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("convforge_corpus_test_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::size_t count_word(const std::string& text, const std::string& word) {
  std::size_t n = 0;
  for (const auto& tok : split_whitespace(text)) {
    std::string t = tok;
    while (!t.empty() && !is_word_char(t.back())) t.pop_back();
    if (t == word) ++n;
  }
  return n;
}

TEST(SpeakerTest, CanonicalForms) {
  EXPECT_TRUE(is_canonical_speaker("person_0"));
  EXPECT_TRUE(is_canonical_speaker("person_12"));
  EXPECT_FALSE(is_canonical_speaker("person_"));
  EXPECT_FALSE(is_canonical_speaker("person_01"));
  EXPECT_FALSE(is_canonical_speaker("Person_1"));
  EXPECT_FALSE(is_canonical_speaker("person_-1"));
  EXPECT_EQ(speaker_index("person_7"), 7);
}

TEST(ConversationTest, SpeakersDerivedFromTurns) {
  Conversation c("c1", {{"person_1", "hi"}, {"person_0", "hello"}, {"person_1", "bye"}});
  EXPECT_EQ(c.speakers(), (std::set<std::string>{"person_0", "person_1"}));
  EXPECT_EQ(c.speaker_order(), (std::vector<std::string>{"person_1", "person_0"}));
  c.append({"person_2", "late"});
  EXPECT_EQ(c.speakers().size(), 3u);
}

TEST(LoadDatasetTest, ParsesTurnsAndDialogueForms) {
  const auto p = write_temp("two.jsonl",
                            R"({"id":"a","summary":"s1","turns":[{"speaker":"person_0","text":"hi"}]})"
                            "\n"
                            R"({"id":"b","summary":"s2","dialogue":"John: hi there\r\nAmanda: hello"})"
                            "\n\n");
  const auto recs = load_dataset(p, Split::kTrain);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[0].conversation->turns().at(0).text, "hi");
  ASSERT_EQ(recs[1].conversation->size(), 2u);
  EXPECT_EQ(recs[1].conversation->turns()[0].speaker, "John");
  EXPECT_EQ(recs[1].conversation->turns()[1].text, "hello");
  EXPECT_EQ(recs[1].split, Split::kTrain);
}

TEST(LoadDatasetTest, EmptyFileGivesEmptyList) {
  EXPECT_TRUE(load_dataset(write_temp("empty.jsonl", ""), Split::kTest).empty());
}

TEST(LoadDatasetTest, MissingSummaryNamesFieldAndLine) {
  const auto p = write_temp("missing.jsonl",
                            R"({"id":"a","summary":"s","turns":[{"speaker":"A","text":"x"}]})"
                            "\n"
                            R"({"id":"b","turns":[{"speaker":"A","text":"x"}]})"
                            "\n");
  try {
    load_dataset(p, Split::kTrain);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "missing field: summary at line 2");
  }
}

TEST(LoadDatasetTest, MalformedLineAndDuplicateIds) {
  EXPECT_THROW(parse_dataset("{\"id\": 1,\n", Split::kTrain), ValidationError);
  EXPECT_THROW(parse_dataset(R"({"id":"a","summary":"s"})"
                             "\n"
                             R"({"id":"a","summary":"t"})",
                             Split::kTrain),
               ValidationError);
}

TEST(LoadDatasetTest, WriteThenLoadRoundTrips) {
  const auto recs = make_synthetic_corpus(20, 4);
  const fs::path p = fs::temp_directory_path() / "convforge_corpus_roundtrip.jsonl";
  write_dataset(p, recs);
  EXPECT_EQ(load_dataset(p, Split::kTrain), recs);
}

TEST(AnonymizeTest, ReplacesSpeakerNamesEverywhere) {
  SummaryRecord r;
  r.id = "x";
  r.summary = "John will be late. Amanda orders pasta.";
  r.conversation = Conversation("x", {{"John", "Amanda, I will be late"},
                                      {"Amanda", "ok John"},
                                      {"John", "sorry Amanda"}});
  const auto [out, map] = anonymize(r);
  EXPECT_EQ(out.summary, "person_0 will be late. person_1 orders pasta.");
  ASSERT_EQ(map.size(), 2u);
  EXPECT_EQ(map[0], (std::pair<std::string, std::string>{"John", "person_0"}));
  EXPECT_EQ(map[1], (std::pair<std::string, std::string>{"Amanda", "person_1"}));
  EXPECT_EQ(out.conversation->turns()[0].speaker, "person_0");
  EXPECT_EQ(out.conversation->turns()[0].text, "person_1, I will be late");
  EXPECT_EQ(out.conversation->turns()[1].text, "ok person_0");
}

TEST(AnonymizeTest, SharedTagForRepeatedName) {
  SummaryRecord r;
  r.id = "y";
  r.summary = "Tom asks about the party.";
  r.conversation = Conversation("y", {{"Tom", "hi"}, {"Ann", "Tom!"}, {"Ann", "where is Tom"}, {"Ann", "Tom?"}});
  std::size_t before = count_word(r.summary, "Tom");
  for (const auto& t : r.conversation->turns()) before += count_word(t.text, "Tom");
  EXPECT_EQ(before, 4u);
  const auto out = anonymize(r).first;
  std::size_t after_tag = count_word(out.summary, "person_0"), after_name = count_word(out.summary, "Tom");
  for (const auto& t : out.conversation->turns()) {
    after_tag += count_word(t.text, "person_0");
    after_name += count_word(t.text, "Tom");
  }
  EXPECT_EQ(after_tag, 4u);
  EXPECT_EQ(after_name, 0u);
}

TEST(AnonymizeTest, WholeWordCaseSensitive) {
  SummaryRecord r;
  r.id = "z";
  r.summary = "Ann met Annabel and ann.";
  r.conversation = Conversation("z", {{"Ann", "hello"}});
  EXPECT_EQ(anonymize(r).first.summary, "person_0 met Annabel and ann.");
}

TEST(AnonymizeTest, IdempotentOnSyntheticAndRawRecords) {
  SummaryRecord r;
  r.id = "w";
  r.summary = "Lee and Kim meet.";
  r.conversation = Conversation("w", {{"Lee", "Kim?"}, {"Kim", "yes Lee"}});
  const auto once = anonymize(r).first;
  const auto [twice, delta] = anonymize(once);
  EXPECT_EQ(twice, once);
  EXPECT_TRUE(delta.empty());
  for (const auto& rec : make_synthetic_corpus(10, 1)) EXPECT_EQ(anonymize(rec).first, rec);
}

TEST(AnonymizeTest, SkipsIndicesAlreadyInUse) {
  SummaryRecord r;
  r.id = "v";
  r.summary = "Bob calls person_0.";
  r.conversation = Conversation("v", {{"person_0", "hi"}, {"Bob", "hey"}});
  const auto [out, map] = anonymize(r);
  ASSERT_EQ(map.size(), 1u);
  EXPECT_EQ(map[0].second, "person_1");
  EXPECT_EQ(out.summary, "person_1 calls person_0.");
}

TEST(SplitTest, SizesAndDeterminism) {
  const auto recs = make_synthetic_corpus(100, 3);
  const auto a = split_for_augmentation(recs, 30, 7);
  const auto b = split_for_augmentation(recs, 30, 7);
  EXPECT_EQ(a.gen_train.size(), 30u);
  EXPECT_EQ(a.holdout.size(), 70u);
  EXPECT_EQ(a.gen_train, b.gen_train);
  EXPECT_EQ(a.holdout, b.holdout);
}

TEST(SplitTest, PartitionProperty) {
  const auto recs = make_synthetic_corpus(10, 5);
  for (int k = 1; k <= 9; ++k) {
    const auto s = split_for_augmentation(recs, 10.0 * k, static_cast<std::uint64_t>(k));
    ASSERT_EQ(s.gen_train.size(), static_cast<std::size_t>(k));
    std::multiset<std::string> ids;
    for (const auto& r : s.gen_train) ids.insert(r.id);
    for (const auto& r : s.holdout) ids.insert(r.id);
    std::multiset<std::string> expected;
    for (const auto& r : recs) expected.insert(r.id);
    EXPECT_EQ(ids, expected);
  }
}

TEST(SplitTest, EmptySideRejected) {
  const auto recs = make_synthetic_corpus(3, 5);
  EXPECT_THROW(split_for_augmentation(recs, 10, 1), ValidationError);
  EXPECT_THROW(split_for_augmentation(recs, 0, 1), ValidationError);
  EXPECT_THROW(split_for_augmentation(recs, 100, 1), ValidationError);
  EXPECT_THROW(split_for_augmentation({}, 50, 1), ValidationError);
}

TEST(StatsTest, HandBuiltFixtures) {
  const std::string five = "a b c d e";
  const Conversation c4("c", {{"person_0", five}, {"person_1", five}, {"person_0", five}, {"person_1", five}});
  const CorpusStats s = compute_stats(std::vector<Conversation>{c4});
  EXPECT_EQ(s.avg_turns, 4.0);
  EXPECT_EQ(s.std_turns, 0.0);
  EXPECT_EQ(s.avg_tokens_per_turn, 5.0);
  EXPECT_EQ(s.std_tokens_per_turn, 0.0);

  const Conversation c2("d", {{"person_0", "x"}, {"person_1", "y z"}});
  const CorpusStats t = compute_stats(std::vector<Conversation>{c2, c4});
  EXPECT_EQ(t.avg_turns, 3.0);
  EXPECT_EQ(t.std_turns, 1.0);
  EXPECT_EQ(t.n_conversations, 2);
  EXPECT_THROW(compute_stats(std::vector<Conversation>{}), ValidationError);
}

TEST(StatsTest, MatchesTwoPassComputation) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto recs = make_synthetic_corpus(50, static_cast<std::uint64_t>(trial));
    std::vector<Conversation> convs;
    for (const auto& r : recs) convs.push_back(*r.conversation);
    std::vector<double> turns, toks;
    for (const auto& c : convs) {
      turns.push_back(static_cast<double>(c.size()));
      for (const auto& t : c.turns()) toks.push_back(static_cast<double>(count_whitespace_tokens(t.text)));
    }
    auto mean_std = [](const std::vector<double>& xs) {
      double m = 0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      double v = 0;
      for (double x : xs) v += (x - m) * (x - m);
      return std::make_pair(m, std::sqrt(v / static_cast<double>(xs.size())));
    };
    const auto [tm, ts] = mean_std(turns);
    const auto [km, ks] = mean_std(toks);
    const CorpusStats s = compute_stats(convs);
    EXPECT_NEAR(s.avg_turns, tm, 1e-9);
    EXPECT_NEAR(s.std_turns, ts, 1e-9);
    EXPECT_NEAR(s.avg_tokens_per_turn, km, 1e-9);
    EXPECT_NEAR(s.std_tokens_per_turn, ks, 1e-9);
  }
}

TEST(SyntheticCorpusTest, UniqueAnonymizedRecords) {
  const auto recs = make_synthetic_corpus(200, 9);
  std::set<std::string> ids, summaries;
  for (const auto& r : recs) {
    ids.insert(r.id);
    summaries.insert(r.summary);
    for (const auto& t : r.conversation->turns()) EXPECT_TRUE(is_canonical_speaker(t.speaker));
  }
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_EQ(summaries.size(), 200u);
}

}  // namespace
}  // namespace convforge
