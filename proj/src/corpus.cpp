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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "convforge/errors.hpp"
#include "convforge/rng.hpp"
#include "convforge/text.hpp"
#include "json.hpp"

namespace convforge {

using json = nlohmann::json;

bool is_canonical_speaker(std::string_view speaker) { return speaker_index(speaker).has_value(); }

std::string canonical_speaker(int index) { return "person_" + std::to_string(index); }

std::optional<int> speaker_index(std::string_view speaker) {
  constexpr std::string_view kPrefix = "person_";
  if (!speaker.starts_with(kPrefix) || speaker.size() == kPrefix.size()) return std::nullopt;
  std::string_view digits = speaker.substr(kPrefix.size());
  // No leading zeros: `person_01` is not canonical.
  if (digits.size() > 1 && digits.front() == '0') return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || value < 0) return std::nullopt;
  return value;
}

Conversation::Conversation(std::string id, std::vector<Turn> turns)
    : id_(std::move(id)), turns_(std::move(turns)) {}

std::set<std::string> Conversation::speakers() const {
  std::set<std::string> out;
  for (const auto& t : turns_) out.insert(t.speaker);
  return out;
}

std::vector<std::string> Conversation::speaker_order() const {
  std::vector<std::string> out;
  for (const auto& t : turns_) {
    if (std::find(out.begin(), out.end(), t.speaker) == out.end()) out.push_back(t.speaker);
  }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split: " + std::string(name));
}

Conversation parse_dialogue_string(std::string_view id, std::string_view dialogue) {
  std::vector<Turn> turns;
  std::size_t start = 0;
  while (start <= dialogue.size()) {
    std::size_t end = dialogue.find('\n', start);
    if (end == std::string_view::npos) end = dialogue.size();
    std::string_view line = trim(dialogue.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      // Continuation of the previous utterance.
      if (!turns.empty()) {
        turns.back().text += " ";
        turns.back().text += line;
      }
      continue;
    }
    std::string_view speaker = trim(line.substr(0, colon));
    std::string_view text = trim(line.substr(colon + 1));
    if (speaker.empty() || text.empty()) continue;
    turns.push_back(Turn{std::string(speaker), std::string(text)});
  }
  return Conversation(std::string(id), std::move(turns));
}

namespace {

std::string line_suffix(std::size_t line_no) { return " at line " + std::to_string(line_no); }

const json& require_field(const json& obj, const char* field, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    throw ValidationError(std::string("missing field: ") + field + line_suffix(line_no));
  }
  return *it;
}

std::string require_string(const json& obj, const char* field, std::size_t line_no) {
  const json& v = require_field(obj, field, line_no);
  if (!v.is_string()) {
    throw ValidationError(std::string("field is not a string: ") + field + line_suffix(line_no));
  }
  return v.get<std::string>();
}

SummaryRecord parse_record(std::string_view line, std::size_t line_no, Split split) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON" + line_suffix(line_no) + ": " + e.what());
  }
  if (!obj.is_object()) throw ValidationError("record is not a JSON object" + line_suffix(line_no));

  SummaryRecord rec;
  const json& id = require_field(obj, "id", line_no);
  rec.id = id.is_string() ? id.get<std::string>() : id.dump();
  rec.summary = std::string(trim(require_string(obj, "summary", line_no)));
  if (rec.summary.empty()) throw ValidationError("empty field: summary" + line_suffix(line_no));
  rec.split = split;

  if (auto it = obj.find("turns"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("field is not an array: turns" + line_suffix(line_no));
    std::vector<Turn> turns;
    for (const auto& t : *it) {
      if (!t.is_object()) throw ValidationError("turn is not an object" + line_suffix(line_no));
      std::string speaker(trim(require_string(t, "speaker", line_no)));
      std::string text(trim(require_string(t, "text", line_no)));
      if (speaker.empty()) throw ValidationError("empty field: speaker" + line_suffix(line_no));
      // Empty utterances carry no content and would violate the Turn invariant.
      if (text.empty()) continue;
      turns.push_back(Turn{std::move(speaker), std::move(text)});
    }
    if (!turns.empty()) rec.conversation = Conversation(rec.id, std::move(turns));
  } else if (auto d = obj.find("dialogue"); d != obj.end() && !d->is_null()) {
    if (!d->is_string()) throw ValidationError("field is not a string: dialogue" + line_suffix(line_no));
    Conversation conv = parse_dialogue_string(rec.id, d->get<std::string>());
    if (!conv.empty()) rec.conversation = std::move(conv);
  }
  return rec;
}

}  // namespace

std::vector<SummaryRecord> parse_dataset(std::string_view jsonl, Split split) {
  std::vector<SummaryRecord> out;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    SummaryRecord rec = parse_record(line, line_no, split);
    if (!seen.insert(rec.id).second) {
      throw ValidationError("duplicate id '" + rec.id + "'" + line_suffix(line_no));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SummaryRecord> load_dataset(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), split);
}

std::string format_record(const SummaryRecord& record) {
  json obj;
  obj["id"] = record.id;
  obj["summary"] = record.summary;
  obj["split"] = std::string(to_string(record.split));
  json turns = json::array();
  if (record.conversation) {
    for (const auto& t : record.conversation->turns()) {
      turns.push_back({{"speaker", t.speaker}, {"text", t.text}});
    }
  }
  obj["turns"] = std::move(turns);
  return obj.dump();
}

void write_dataset(const std::filesystem::path& path, std::span<const SummaryRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write dataset: " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
}

namespace {

struct NameRule {
  std::string name;
  std::string tag;
};

// Replaces whole-word, case-sensitive occurrences of each name in one pass.
// Longer names win when several match at the same position.
std::string replace_names(std::string_view text, const std::vector<NameRule>& rules) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool at_boundary = i == 0 || !is_word_char(text[i - 1]);
    const NameRule* hit = nullptr;
    if (at_boundary) {
      for (const auto& rule : rules) {
        const std::string& n = rule.name;
        if (text.compare(i, n.size(), n) != 0) continue;
        std::size_t after = i + n.size();
        if (after < text.size() && is_word_char(text[after])) continue;
        hit = &rule;
        break;
      }
    }
    if (hit != nullptr) {
      out += hit->tag;
      i += hit->name.size();
    } else {
      out += text[i];
      ++i;
    }
  }
  return out;
}

}  // namespace

std::pair<SummaryRecord, NameMap> anonymize(const SummaryRecord& record) {
  NameMap map;
  if (!record.conversation) return {record, map};

  std::set<int> used;
  for (const auto& s : record.conversation->speaker_order()) {
    if (auto k = speaker_index(s)) used.insert(*k);
  }
  int next = 0;
  for (const auto& s : record.conversation->speaker_order()) {
    if (is_canonical_speaker(s)) continue;
    while (used.count(next) != 0) ++next;
    map.emplace_back(s, canonical_speaker(next));
    used.insert(next);
  }
  if (map.empty()) return {record, map};

  std::vector<NameRule> rules;
  for (const auto& [name, tag] : map) rules.push_back({name, tag});
  std::stable_sort(rules.begin(), rules.end(),
                   [](const NameRule& a, const NameRule& b) { return a.name.size() > b.name.size(); });

  SummaryRecord out = record;
  out.summary = replace_names(record.summary, rules);
  std::vector<Turn> turns;
  turns.reserve(record.conversation->size());
  for (const auto& t : record.conversation->turns()) {
    std::string speaker = t.speaker;
    for (const auto& [name, tag] : map) {
      if (speaker == name) {
        speaker = tag;
        break;
      }
    }
    turns.push_back(Turn{std::move(speaker), replace_names(t.text, rules)});
  }
  out.conversation = Conversation(record.conversation->id(), std::move(turns));
  return {std::move(out), std::move(map)};
}

AugmentationSplit split_for_augmentation(std::span<const SummaryRecord> records, double x_percent,
                                         std::uint64_t seed) {
  if (records.empty()) throw ValidationError("split_for_augmentation: no records");
  if (!(x_percent > 0.0 && x_percent < 100.0)) {
    throw ValidationError("split_for_augmentation: x_percent must lie in (0, 100)");
  }
  const auto n = records.size();
  const auto k = static_cast<std::size_t>(std::llround(x_percent / 100.0 * static_cast<double>(n)));
  if (k == 0 || k == n) {
    throw ValidationError("split_for_augmentation: x_percent=" + std::to_string(x_percent) + " leaves an empty side for " +
                          std::to_string(n) + " records");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<char> chosen(n, 0);
  for (std::size_t i = 0; i < k; ++i) chosen[order[i]] = 1;

  AugmentationSplit out;
  out.gen_train.reserve(k);
  out.holdout.reserve(n - k);
  for (std::size_t i = 0; i < n; ++i) {
    (chosen[i] ? out.gen_train : out.holdout).push_back(records[i]);
  }
  return out;
}

CorpusStats compute_stats(std::span<const Conversation> conversations) {
  if (conversations.empty()) throw ValidationError("compute_stats: empty conversation list");
  // Welford accumulators for numerical stability on large corpora.
  double turn_mean = 0.0, turn_m2 = 0.0;
  double tok_mean = 0.0, tok_m2 = 0.0;
  std::int64_t n_conv = 0, n_turns = 0;
  for (const auto& c : conversations) {
    ++n_conv;
    const double x = static_cast<double>(c.size());
    const double d = x - turn_mean;
    turn_mean += d / static_cast<double>(n_conv);
    turn_m2 += d * (x - turn_mean);
    for (const auto& t : c.turns()) {
      ++n_turns;
      const double y = static_cast<double>(count_whitespace_tokens(t.text));
      const double e = y - tok_mean;
      tok_mean += e / static_cast<double>(n_turns);
      tok_m2 += e * (y - tok_mean);
    }
  }
  CorpusStats s;
  s.n_conversations = n_conv;
  s.avg_turns = turn_mean;
  s.std_turns = std::sqrt(std::max(0.0, turn_m2 / static_cast<double>(n_conv)));
  if (n_turns > 0) {
    s.avg_tokens_per_turn = tok_mean;
    s.std_tokens_per_turn = std::sqrt(std::max(0.0, tok_m2 / static_cast<double>(n_turns)));
  }
  return s;
}

namespace {

constexpr std::string_view kActions[] = {"buy", "bring", "cook", "fix", "order", "paint", "sell", "clean"};
constexpr std::string_view kObjects[] = {"the pasta", "a cake", "the car", "the bike", "some flowers",
                                         "the tickets", "a new lamp", "the fridge"};
constexpr std::string_view kTimes[] = {"today", "tomorrow", "tonight", "at noon", "on friday"};
constexpr std::string_view kReplies[] = {"ok sounds good", "great idea", "i will join you",
                                         "no problem at all", "see you then"};
constexpr std::string_view kReplySummary[] = {"agrees", "likes the idea", "will join", "is fine with it",
                                              "will see person_0 then"};
constexpr std::string_view kFavors[] = {"call the shop", "pick me up", "bring the keys", "book a table"};

}  // namespace

std::vector<SummaryRecord> make_synthetic_corpus(std::size_t n, std::uint64_t seed, Split split,
                                                 std::string_view id_prefix) {
  constexpr std::size_t kA = std::size(kActions), kO = std::size(kObjects), kT = std::size(kTimes),
                        kR = std::size(kReplies);
  const std::size_t combos = kA * kO * kT * kR;
  std::vector<std::size_t> codes(combos);
  for (std::size_t i = 0; i < combos; ++i) codes[i] = i;
  Rng rng(seed);
  rng.shuffle(codes);

  std::vector<SummaryRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t code = codes[i % combos];
    const auto a = kActions[code % kA];
    code /= kA;
    const auto o = kObjects[code % kO];
    code /= kO;
    const auto t = kTimes[code % kT];
    code /= kT;
    const std::size_t r = code % kR;
    const auto favor = kFavors[rng.uniform_index(std::size(kFavors))];
    const auto n_turns = static_cast<int>(rng.uniform_int(2, 6));

    std::string fact = std::string(a) + " " + std::string(o) + " " + std::string(t);
    std::string summary = "person_0 will " + fact + " . person_1 " + std::string(kReplySummary[r]) + " .";
    std::vector<Turn> turns;
    turns.push_back({"person_0", "hey , i will " + fact});
    turns.push_back({"person_1", std::string(kReplies[r])});
    if (n_turns >= 3) turns.push_back({"person_0", "can you " + std::string(favor) + " ?"});
    if (n_turns >= 4) {
      turns.push_back({"person_1", "sure , i will " + std::string(favor)});
      summary += " person_1 will " + std::string(favor) + " .";
    }
    if (n_turns >= 5) turns.push_back({"person_0", "thanks"});
    if (n_turns >= 6) turns.push_back({"person_1", "bye"});

    SummaryRecord rec;
    rec.id = std::string(id_prefix) + "-" + std::to_string(i);
    rec.summary = std::move(summary);
    rec.conversation = Conversation(rec.id, std::move(turns));
    rec.split = split;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace convforge
