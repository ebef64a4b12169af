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

#include <algorithm>
#include <cctype>
#include <charconv>

#include "convforge/errors.hpp"
#include "convforge/text.hpp"

namespace convforge {

std::string_view surface(SpecialToken token) {
  switch (token) {
    case SpecialToken::kBos:
      return "<bos>";
    case SpecialToken::kEos:
      return "<eos>";
    case SpecialToken::kDialog:
      return "<dialog>";
    case SpecialToken::kContext:
      return "<context>";
    case SpecialToken::kTurnsToGo:
      return "<turns_to_go>";
    case SpecialToken::kSpeaker:
      return "<speaker>";
    case SpecialToken::kTurnLength:
      return "<turn_length>";
    case SpecialToken::kTurn:
      return "<turn>";
  }
  return "";
}

std::optional<SpecialToken> parse_special(std::string_view s) {
  for (SpecialToken t : kAllSpecialTokens) {
    if (surface(t) == s) return t;
  }
  return std::nullopt;
}

std::string speaker_tag(std::string_view speaker_id) { return "<" + std::string(speaker_id) + ">"; }

std::string speaker_tag(int index) { return speaker_tag(canonical_speaker(index)); }

bool is_speaker_tag(std::string_view s) {
  return s.size() > 2 && s.front() == '<' && s.back() == '>' &&
         is_canonical_speaker(s.substr(1, s.size() - 2));
}

bool is_special_surface(std::string_view s) { return parse_special(s).has_value() || is_speaker_tag(s); }

std::string_view to_string(LengthBucket bucket) {
  switch (bucket) {
    case LengthBucket::kShort:
      return "Short";
    case LengthBucket::kMedium:
      return "Medium";
    case LengthBucket::kLong:
      return "Long";
  }
  return "Medium";
}

std::optional<LengthBucket> parse_bucket(std::string_view name) {
  for (LengthBucket b : kAllBuckets) {
    if (to_string(b) == name) return b;
  }
  return std::nullopt;
}

LengthBucket bucket_for_count(std::size_t token_count) {
  if (token_count <= 3) return LengthBucket::kShort;
  if (token_count > 10) return LengthBucket::kLong;
  return LengthBucket::kMedium;
}

LengthBucket bucket_length(std::string_view utterance) {
  return bucket_for_count(count_whitespace_tokens(utterance));
}

void validate_countdown(const std::vector<ControlState>& controls) {
  if (controls.empty()) throw ValidationError("control list is empty");
  const auto n = static_cast<int>(controls.size());
  for (int i = 0; i < n; ++i) {
    const auto& c = controls[static_cast<std::size_t>(i)];
    if (c.turns_to_go != n - i) {
      throw ValidationError("broken turns_to_go countdown at control " + std::to_string(i) + ": expected " +
                            std::to_string(n - i) + ", got " + std::to_string(c.turns_to_go));
    }
    if (!is_canonical_speaker(c.next_speaker)) {
      throw ValidationError("control " + std::to_string(i) + " has non-canonical speaker '" + c.next_speaker + "'");
    }
  }
}

namespace {

// Length of the special token starting at text[pos], or 0.
std::size_t special_at(std::string_view text, std::size_t pos) {
  if (text[pos] != '<') return 0;
  std::size_t close = text.find('>', pos + 1);
  if (close == std::string_view::npos) return 0;
  std::size_t len = close - pos + 1;
  return is_special_surface(text.substr(pos, len)) ? len : 0;
}

bool is_space(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

class EncodingBuilder {
 public:
  void add(std::string_view piece, Segment segment) {
    enc_.text.append(piece);
    for (auto& tok : surface_tokens(piece)) {
      if (is_special_surface(tok)) enc_.boundaries.push_back(enc_.tokens.size());
      enc_.tokens.push_back(std::move(tok));
      enc_.segment_labels.push_back(segment);
    }
  }

  SequenceEncoding finish(bool training) {
    enc_.is_training = training;
    return std::move(enc_);
  }

 private:
  SequenceEncoding enc_;
};

void check_speakers(const std::vector<Turn>& turns) {
  for (const auto& t : turns) {
    if (!is_canonical_speaker(t.speaker)) {
      throw ValidationError("unknown speaker tag pattern '" + t.speaker + "' (expected person_<k>)");
    }
  }
}

std::string linearize_turns(const std::vector<Turn>& turns) {
  check_speakers(turns);
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += speaker_tag(turns[i].speaker);
    out += ' ';
    out += turns[i].text;
  }
  return out;
}

}  // namespace

std::vector<std::string> surface_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (std::size_t len = special_at(text, i); len > 0) {
      out.emplace_back(text.substr(i, len));
      i += len;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j]) && special_at(text, j) == 0) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string linearize(const Conversation& conversation) { return linearize_turns(conversation.turns()); }

SequenceEncoding encode_sl(std::string_view summary, const std::optional<Conversation>& conversation) {
  if (trim(summary).empty()) throw ValidationError("encode_sl: empty summary");
  EncodingBuilder b;
  b.add(surface(SpecialToken::kBos), Segment::kSummary);
  b.add(summary, Segment::kSummary);
  b.add(" ", Segment::kSummary);
  b.add(surface(SpecialToken::kDialog), Segment::kConversation);
  if (!conversation) return b.finish(false);
  b.add(linearize(*conversation), Segment::kConversation);
  b.add(surface(SpecialToken::kEos), Segment::kConversation);
  return b.finish(true);
}

SequenceEncoding encode_cn(std::string_view summary, const std::vector<Turn>& context,
                           const ControlState& control, const std::optional<std::string>& utterance) {
  if (trim(summary).empty()) throw ValidationError("encode_cn: empty summary");
  if (control.turns_to_go < 1) throw ValidationError("encode_cn: turns_to_go must be >= 1");
  if (!is_canonical_speaker(control.next_speaker)) {
    throw ValidationError("encode_cn: unknown speaker tag pattern '" + control.next_speaker + "'");
  }
  const int turns_to_go = std::min(control.turns_to_go, kMaxTurnsToGo);

  EncodingBuilder b;
  b.add(surface(SpecialToken::kBos), Segment::kSummary);
  b.add(summary, Segment::kSummary);
  b.add(" ", Segment::kSummary);
  b.add(surface(SpecialToken::kContext), Segment::kConversation);
  b.add(linearize_turns(context), Segment::kConversation);

  std::string ctl;
  ctl += ' ';
  ctl += surface(SpecialToken::kTurnsToGo);
  ctl += std::to_string(turns_to_go);
  ctl += ' ';
  ctl += surface(SpecialToken::kSpeaker);
  ctl += speaker_tag(control.next_speaker);
  ctl += ' ';
  ctl += surface(SpecialToken::kTurnLength);
  ctl += to_string(control.next_length);
  ctl += ' ';
  ctl += surface(SpecialToken::kTurn);
  b.add(ctl, Segment::kControl);
  if (!utterance) return b.finish(false);
  b.add(*utterance, Segment::kConversation);
  b.add(surface(SpecialToken::kEos), Segment::kConversation);
  return b.finish(true);
}

std::vector<SequenceEncoding> training_sequences_cn(const SummaryRecord& record) {
  if (!record.conversation || record.conversation->empty()) {
    throw ValidationError("training_sequences_cn: record '" + record.id + "' has no conversation");
  }
  const auto& turns = record.conversation->turns();
  const auto n = turns.size();
  std::vector<SequenceEncoding> out;
  out.reserve(n);
  std::vector<Turn> context;
  for (std::size_t i = 0; i < n; ++i) {
    ControlState control{static_cast<int>(n - i), turns[i].speaker, bucket_length(turns[i].text)};
    out.push_back(encode_cn(record.summary, context, control, turns[i].text));
    context.push_back(turns[i]);
  }
  return out;
}

std::optional<ControlState> parse_controls(std::string_view cn_text) {
  auto toks = surface_tokens(cn_text);
  auto find = [&](SpecialToken t) -> std::optional<std::size_t> {
    auto it = std::find(toks.begin(), toks.end(), surface(t));
    if (it == toks.end() || it + 1 == toks.end()) return std::nullopt;
    return static_cast<std::size_t>(it - toks.begin()) + 1;
  };
  auto n_pos = find(SpecialToken::kTurnsToGo);
  auto s_pos = find(SpecialToken::kSpeaker);
  auto l_pos = find(SpecialToken::kTurnLength);
  if (!n_pos || !s_pos || !l_pos) return std::nullopt;

  ControlState c;
  const std::string& num = toks[*n_pos];
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), c.turns_to_go);
  if (ec != std::errc() || ptr != num.data() + num.size() || c.turns_to_go < 1) return std::nullopt;

  const std::string& tag = toks[*s_pos];
  if (!is_speaker_tag(tag)) return std::nullopt;
  c.next_speaker = tag.substr(1, tag.size() - 2);

  auto bucket = parse_bucket(toks[*l_pos]);
  if (!bucket) return std::nullopt;
  c.next_length = *bucket;
  return c;
}

std::string conversation_span(std::string_view sl_text) {
  const auto dialog = surface(SpecialToken::kDialog);
  std::size_t pos = sl_text.find(dialog);
  if (pos == std::string_view::npos) return {};
  std::string_view rest = sl_text.substr(pos + dialog.size());
  std::size_t eos = rest.find(surface(SpecialToken::kEos));
  if (eos != std::string_view::npos) rest = rest.substr(0, eos);
  return std::string(rest);
}

DecodedConversation decode_conversation(std::string_view text) {
  DecodedConversation out;
  std::vector<Turn> turns;
  std::string current_speaker;
  std::string current_text;
  bool in_turn = false;

  auto flush = [&] {
    if (!in_turn) return;
    std::string_view t = trim(current_text);
    if (!t.empty()) turns.push_back(Turn{current_speaker, std::string(t)});
    current_text.clear();
  };

  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = special_at(text, i);
    if (len == 0) {
      if (in_turn) current_text += text[i];
      ++i;
      continue;
    }
    std::string_view tok = text.substr(i, len);
    i += len;
    if (is_speaker_tag(tok)) {
      flush();
      current_speaker = std::string(tok.substr(1, tok.size() - 2));
      in_turn = true;
    } else if (in_turn) {
      // A removed structural token becomes a single separating space.
      while (!current_text.empty() && std::isspace(static_cast<unsigned char>(current_text.back()))) {
        current_text.pop_back();
      }
      current_text += ' ';
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    }
  }
  flush();

  out.well_formed = !turns.empty();
  out.conversation = Conversation("", std::move(turns));
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  enum class Kind { kNone, kWord, kSpeaker, kStructural };
  auto kind_of = [](const std::string& t) {
    if (is_speaker_tag(t)) return Kind::kSpeaker;
    if (parse_special(t)) return Kind::kStructural;
    return Kind::kWord;
  };
  Kind prev = Kind::kNone;
  for (const auto& tok : tokens) {
    const Kind k = kind_of(tok);
    if (prev != Kind::kNone) {
      if (k == Kind::kSpeaker) {
        if (prev != Kind::kStructural) out += '\n';
      } else if (k == Kind::kStructural) {
        if (tok != surface(SpecialToken::kEos)) out += ' ';
      } else if (prev != Kind::kStructural) {
        out += ' ';
      }
    }
    out += tok;
    prev = k;
  }
  return out;
}

}  // namespace convforge
