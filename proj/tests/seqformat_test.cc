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

#include "convforge/seqformat.hpp"

#include <random>
#include <regex>
#include <string>
#include <vector>

#include "convforge/errors.hpp"
#include "gtest/gtest.h"
#include "testing/random_conversations.hpp"

namespace convforge {
namespace {

using testing_util::random_conversation;

TEST(BucketTest, Boundaries) {
  EXPECT_EQ(bucket_length(""), LengthBucket::kShort);
  EXPECT_EQ(bucket_length("ok thanks"), LengthBucket::kShort);
  for (int n = 0; n <= 15; ++n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += "w ";
    const LengthBucket expected = n <= 3 ? LengthBucket::kShort : (n > 10 ? LengthBucket::kLong : LengthBucket::kMedium);
    EXPECT_EQ(bucket_length(s), expected) << n;
  }
  EXPECT_EQ(bucket_for_count(3), LengthBucket::kShort);
  EXPECT_EQ(bucket_for_count(4), LengthBucket::kMedium);
  EXPECT_EQ(bucket_for_count(10), LengthBucket::kMedium);
  EXPECT_EQ(bucket_for_count(11), LengthBucket::kLong);
}

TEST(SpecialTokenTest, SurfaceStrings) {
  EXPECT_EQ(surface(SpecialToken::kBos), "<bos>");
  EXPECT_EQ(surface(SpecialToken::kTurnsToGo), "<turns_to_go>");
  EXPECT_EQ(speaker_tag("person_4"), "<person_4>");
  EXPECT_TRUE(is_speaker_tag("<person_0>"));
  EXPECT_FALSE(is_speaker_tag("<person_x>"));
  EXPECT_EQ(surface_tokens("<bos>a b<dialog><person_0> hi\nyo"),
            (std::vector<std::string>{"<bos>", "a", "b", "<dialog>", "<person_0>", "hi", "yo"}));
}

TEST(EncodeSlTest, TrainingAndPromptForms) {
  const Conversation c("c", {{"person_0", "hi"}, {"person_1", "hello"}});
  const SequenceEncoding train = encode_sl("s", c);
  EXPECT_EQ(train.text, "<bos>s <dialog><person_0> hi\n<person_1> hello<eos>");
  EXPECT_TRUE(train.is_training);
  EXPECT_EQ(train.segment_labels.size(), train.tokens.size());
  EXPECT_EQ(train.segment_labels[1], Segment::kSummary);
  EXPECT_EQ(train.segment_labels.back(), Segment::kConversation);

  const SequenceEncoding prompt = encode_sl("s", std::nullopt);
  EXPECT_EQ(prompt.text, "<bos>s <dialog>");
  EXPECT_FALSE(prompt.is_training);
  EXPECT_TRUE(train.text.starts_with(prompt.text));
}

TEST(EncodeSlTest, RejectsBadInput) {
  EXPECT_THROW(encode_sl("", std::nullopt), ValidationError);
  EXPECT_THROW(encode_sl("s", Conversation("c", {{"John", "hi"}})), ValidationError);
}

TEST(EncodeCnTest, ExactPromptAndTraining) {
  const ControlState ctl{3, "person_0", LengthBucket::kShort};
  EXPECT_EQ(encode_cn("s", {}, ctl, std::nullopt).text,
            "<bos>s <context> <turns_to_go>3 <speaker><person_0> <turn_length>Short <turn>");
  const std::vector<Turn> ctx = {{"person_1", "hi there"}};
  const SequenceEncoding t = encode_cn("s", ctx, ctl, std::string("ok"));
  EXPECT_EQ(t.text, "<bos>s <context><person_1> hi there <turns_to_go>3 <speaker><person_0> <turn_length>Short <turn>ok<eos>");
  EXPECT_TRUE(t.is_training);
  EXPECT_THROW(encode_cn("", {}, ctl, std::nullopt), ValidationError);
  EXPECT_THROW(encode_cn("s", {}, ControlState{0, "person_0", LengthBucket::kShort}, std::nullopt), ValidationError);
}

TEST(EncodeCnTest, ClampsTurnsToGo) {
  const auto enc = encode_cn("s", {}, ControlState{45, "person_1", LengthBucket::kLong}, std::nullopt);
  EXPECT_NE(enc.text.find("<turns_to_go>30 "), std::string::npos);
}

TEST(EncodeCnTest, TrainingTruncatedAtTurnEqualsPrompt) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 100; ++i) {
    const Conversation c = random_conversation(gen, 1, 6, 3);
    SummaryRecord r{"r", "person_0 says hi .", c, Split::kTrain};
    const auto seqs = training_sequences_cn(r);
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      const std::vector<Turn> ctx(c.turns().begin(), c.turns().begin() + static_cast<std::ptrdiff_t>(k));
      const ControlState ctl = *parse_controls(seqs[k].text);
      const std::string prompt = encode_cn(r.summary, ctx, ctl, std::nullopt).text;
      const std::string& full = seqs[k].text;
      ASSERT_EQ(full.substr(0, full.find("<turn>") + 6), prompt);
    }
  }
}

TEST(TrainingSequencesCnTest, CountdownAndBuckets) {
  SummaryRecord r;
  r.id = "r";
  r.summary = "s";
  r.conversation = Conversation("r", {{"person_0", "a b c"}, {"person_1", "a b c d"},
                                      {"person_0", "1 2 3 4 5 6 7 8 9 10"}, {"person_1", "1 2 3 4 5 6 7 8 9 10 11"}});
  const auto seqs = training_sequences_cn(r);
  ASSERT_EQ(seqs.size(), 4u);
  const LengthBucket expected[] = {LengthBucket::kShort, LengthBucket::kMedium, LengthBucket::kMedium,
                                   LengthBucket::kLong};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto ctl = parse_controls(seqs[i].text);
    ASSERT_TRUE(ctl.has_value());
    EXPECT_EQ(ctl->turns_to_go, static_cast<int>(4 - i));
    EXPECT_EQ(ctl->next_speaker, r.conversation->turns()[i].speaker);
    EXPECT_EQ(ctl->next_length, expected[i]);
    EXPECT_EQ(ctl->next_length, bucket_length(r.conversation->turns()[i].text));
  }
  EXPECT_NE(seqs[0].text.find("<context> <turns_to_go>"), std::string::npos);

  SummaryRecord bare{"b", "s", std::nullopt, Split::kTrain};
  EXPECT_THROW(training_sequences_cn(bare), ValidationError);
}

TEST(ParseControlsTest, RandomParseBack) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> ttg(1, 30), spk(0, 9), bucket(0, 2);
  for (int i = 0; i < 1000; ++i) {
    const ControlState ctl{ttg(gen), "person_" + std::to_string(spk(gen)), kAllBuckets[bucket(gen)]};
    const Conversation ctx = random_conversation(gen, 0, 3, 3);
    const auto enc = encode_cn("person_0 meets person_1 .", ctx.turns(), ctl, std::nullopt);
    ASSERT_EQ(parse_controls(enc.text), ctl) << enc.text;
  }
  EXPECT_FALSE(parse_controls("<bos>no controls here").has_value());
}

TEST(ValidateCountdownTest, AcceptsOnlyExactCountdown) {
  std::vector<ControlState> ok = {{3, "person_0", LengthBucket::kShort},
                                  {2, "person_1", LengthBucket::kShort},
                                  {1, "person_0", LengthBucket::kLong}};
  EXPECT_NO_THROW(validate_countdown(ok));
  auto bad = ok;
  bad[1].turns_to_go = 3;
  EXPECT_THROW(validate_countdown(bad), ValidationError);
  EXPECT_THROW(validate_countdown({}), ValidationError);
}

TEST(DecodeTest, Examples) {
  auto d = decode_conversation("<person_0> hi\n<person_1> yo");
  EXPECT_TRUE(d.well_formed);
  ASSERT_EQ(d.conversation.size(), 2u);
  EXPECT_EQ(d.conversation.turns()[1], (Turn{"person_1", "yo"}));

  d = decode_conversation("garbage with no tags");
  EXPECT_FALSE(d.well_formed);
  EXPECT_TRUE(d.conversation.empty());

  d = decode_conversation("<person_0> a <person_0> b");
  ASSERT_EQ(d.conversation.size(), 2u);
  EXPECT_EQ(d.conversation.speakers(), (std::set<std::string>{"person_0"}));

  d = decode_conversation("lead <person_2> <person_1> x <eos> y");
  ASSERT_EQ(d.conversation.size(), 1u);
  EXPECT_EQ(d.conversation.turns()[0], (Turn{"person_1", "x y"}));
}

TEST(DecodeTest, AgreesWithRegexSplitOracle) {
  std::mt19937_64 gen(23);
  const std::regex tag("<person_(0|[1-9][0-9]*)>");
  for (int i = 0; i < 300; ++i) {
    const Conversation c = random_conversation(gen, 1, 8, 2);
    std::string text = linearize(c);
    for (char& ch : text) {
      if (ch == '\n') ch = ' ';
    }
    std::vector<Turn> oracle;
    auto it = std::sregex_iterator(text.begin(), text.end(), tag);
    std::vector<std::smatch> ms(it, std::sregex_iterator());
    for (std::size_t k = 0; k < ms.size(); ++k) {
      const auto begin = ms[k].position(0) + ms[k].length(0);
      const auto end = k + 1 < ms.size() ? ms[k + 1].position(0) : static_cast<long>(text.size());
      std::string utt = text.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin));
      utt.erase(0, utt.find_first_not_of(' '));
      utt.erase(utt.find_last_not_of(' ') + 1);
      oracle.push_back({"person_" + ms[k][1].str(), utt});
    }
    ASSERT_EQ(decode_conversation(text).conversation.turns(), oracle);
  }
}

TEST(RoundTripTest, LinearizeThenDecode) {
  std::mt19937_64 gen(99);
  int failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const Conversation c = random_conversation(gen, 1, 20, 4);
    const auto d = decode_conversation(linearize(c));
    if (!d.well_formed || d.conversation != c) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TEST(RoundTripTest, EncodeSlConversationSpan) {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 200; ++i) {
    const Conversation c = random_conversation(gen, 1, 10, 3);
    const auto enc = encode_sl("person_0 talks .", c);
    ASSERT_EQ(decode_conversation(conversation_span(enc.text)).conversation, c);
  }
}

TEST(DetokenizeTest, InvertsSurfaceTokens) {
  const Conversation c("c", {{"person_0", "hi"}, {"person_1", "hello there"}});
  const auto enc = encode_sl("s", c);
  EXPECT_EQ(detokenize(enc.tokens), enc.text);
}

}  // namespace
}  // namespace convforge
