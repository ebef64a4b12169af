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

// Linear sequence formats for whole-conversation (SL) and control-token (CN)
// generation, the special-token table, and parsing of generated text.
//
// Whole conversation:  <bos>summary <dialog><person_0> hi\n<person_1> hello<eos>
// Controlled turn:     <bos>summary <context>CTX <turns_to_go>N <speaker><person_k>
//                      <turn_length>BUCKET <turn>utterance<eos>
//
// The surface strings are part of the saved-model contract.

#ifndef CONVFORGE_SEQFORMAT_HPP_
#define CONVFORGE_SEQFORMAT_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/corpus.hpp"

namespace convforge {

enum class SpecialToken { kBos, kEos, kDialog, kContext, kTurnsToGo, kSpeaker, kTurnLength, kTurn };

inline constexpr SpecialToken kAllSpecialTokens[] = {
    SpecialToken::kBos,      SpecialToken::kEos,     SpecialToken::kDialog,     SpecialToken::kContext,
    SpecialToken::kTurnsToGo, SpecialToken::kSpeaker, SpecialToken::kTurnLength, SpecialToken::kTurn};

std::string_view surface(SpecialToken token);
std::optional<SpecialToken> parse_special(std::string_view surface);

// `<person_k>`
std::string speaker_tag(std::string_view speaker_id);
std::string speaker_tag(int index);

// True for the eight structural tokens and any `<person_k>` tag.
bool is_special_surface(std::string_view s);
bool is_speaker_tag(std::string_view s);

enum class LengthBucket { kShort, kMedium, kLong };

inline constexpr LengthBucket kAllBuckets[] = {LengthBucket::kShort, LengthBucket::kMedium, LengthBucket::kLong};

std::string_view to_string(LengthBucket bucket);
std::optional<LengthBucket> parse_bucket(std::string_view name);

// Short: <= 3 whitespace tokens, Long: > 10, Medium otherwise.
LengthBucket bucket_for_count(std::size_t token_count);
LengthBucket bucket_length(std::string_view utterance);

// Values above this are clamped when rendered into a sequence.
inline constexpr int kMaxTurnsToGo = 30;

struct ControlState {
  int turns_to_go = 1;
  std::string next_speaker;  // canonical `person_k`
  LengthBucket next_length = LengthBucket::kMedium;

  bool operator==(const ControlState&) const = default;
};

// Throws ValidationError unless turns_to_go counts down by one to 1.
void validate_countdown(const std::vector<ControlState>& controls);

enum class Segment { kSummary, kConversation, kControl };

struct SequenceEncoding {
  std::string text;
  // Surface tokens: special tokens are atomic, other text is split on whitespace.
  std::vector<std::string> tokens;
  std::vector<Segment> segment_labels;  // one per token
  std::vector<std::size_t> boundaries;  // indices into tokens of special tokens
  bool is_training = false;             // ends with <eos>
};

// Splits text into surface tokens. Newlines are separators only.
std::vector<std::string> surface_tokens(std::string_view text);

// Conversation span: `<person_k> utterance` per turn, joined by '\n'.
// Throws ValidationError if a speaker is not canonical.
std::string linearize(const Conversation& conversation);

// Prompt (no conversation) ends at `<dialog>`; otherwise a training sequence.
SequenceEncoding encode_sl(std::string_view summary, const std::optional<Conversation>& conversation);

// Prompt (no utterance) ends at `<turn>`; otherwise a training sequence.
SequenceEncoding encode_cn(std::string_view summary, const std::vector<Turn>& context,
                           const ControlState& control, const std::optional<std::string>& utterance);

std::vector<SequenceEncoding> training_sequences_cn(const SummaryRecord& record);

// The rendered control fields of a CN sequence.
std::optional<ControlState> parse_controls(std::string_view cn_text);

// Returns the conversation text following `<dialog>` (without <eos>).
std::string conversation_span(std::string_view sl_text);

struct DecodedConversation {
  Conversation conversation;
  bool well_formed = false;
};

// Never throws. Text before the first speaker tag is dropped, structural
// special tokens inside utterances are removed, empty utterances are dropped.
DecodedConversation decode_conversation(std::string_view text);

// Joins surface tokens back into text: single spaces, '\n' before speaker tags
// that follow content, no space after structural tokens like <dialog>.
std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace convforge

#endif  // CONVFORGE_SEQFORMAT_HPP_
