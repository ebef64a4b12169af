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

// Data model for (summary, conversation) corpora plus ingestion, speaker
// anonymization, augmentation splits and descriptive statistics.

#ifndef CONVFORGE_CORPUS_HPP_
#define CONVFORGE_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace convforge {

// Canonical speaker ids look like `person_<k>`. Freshly ingested data may
// still carry the original names; anonymize() rewrites them.
bool is_canonical_speaker(std::string_view speaker);
std::string canonical_speaker(int index);
// Returns k for `person_<k>`, nullopt otherwise.
std::optional<int> speaker_index(std::string_view speaker);

struct Turn {
  std::string speaker;
  std::string text;

  bool operator==(const Turn&) const = default;
};

class Conversation {
 public:
  Conversation() = default;
  Conversation(std::string id, std::vector<Turn> turns);

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  const std::vector<Turn>& turns() const { return turns_; }
  std::size_t size() const { return turns_.size(); }
  bool empty() const { return turns_.empty(); }

  void append(Turn turn) { turns_.push_back(std::move(turn)); }

  // Distinct speakers; always derived from turns().
  std::set<std::string> speakers() const;
  // Distinct speakers in order of first appearance.
  std::vector<std::string> speaker_order() const;

  bool operator==(const Conversation&) const = default;

 private:
  std::string id_;
  std::vector<Turn> turns_;
};

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct SummaryRecord {
  std::string id;
  std::string summary;
  std::optional<Conversation> conversation;
  Split split = Split::kTrain;

  bool operator==(const SummaryRecord&) const = default;
};

// Ordered original-name -> canonical-id mapping.
using NameMap = std::vector<std::pair<std::string, std::string>>;

struct CorpusStats {
  double avg_turns = 0.0;
  double std_turns = 0.0;
  double avg_tokens_per_turn = 0.0;
  double std_tokens_per_turn = 0.0;
  std::int64_t n_conversations = 0;
};

// Reads JSONL records {"id", "summary", "turns": [{"speaker","text"}]} or the
// raw Samsum form with a "dialogue" string of `Name: utterance` lines.
// Throws ValidationError naming the line (and field) on bad input.
std::vector<SummaryRecord> load_dataset(const std::filesystem::path& path, Split split);
std::vector<SummaryRecord> parse_dataset(std::string_view jsonl, Split split);

// Writes the canonical JSONL form, one record per line.
void write_dataset(const std::filesystem::path& path, std::span<const SummaryRecord> records);
std::string format_record(const SummaryRecord& record);

// Splits a Samsum `dialogue` string into turns (newline, then first colon).
Conversation parse_dialogue_string(std::string_view id, std::string_view dialogue);

std::pair<SummaryRecord, NameMap> anonymize(const SummaryRecord& record);

struct AugmentationSplit {
  std::vector<SummaryRecord> gen_train;
  std::vector<SummaryRecord> holdout;
};

// Deterministic partition; gen_train holds round(x_percent/100 * n) records.
// Both sides keep the input order.
AugmentationSplit split_for_augmentation(std::span<const SummaryRecord> records, double x_percent,
                                         std::uint64_t seed);

CorpusStats compute_stats(std::span<const Conversation> conversations);

// Templated two-party corpus with anonymized speakers; used by tests and the
// `synth` CLI command. Summaries are unique per record.
std::vector<SummaryRecord> make_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                                 Split split = Split::kTrain,
                                                 std::string_view id_prefix = "syn");

}  // namespace convforge

#endif  // CONVFORGE_CORPUS_HPP_
