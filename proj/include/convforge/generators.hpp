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

// Whole-conversation (SL) and turn-by-turn controlled (CN) generation.

#ifndef CONVFORGE_GENERATORS_HPP_
#define CONVFORGE_GENERATORS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/corpus.hpp"
#include "convforge/lmbridge.hpp"
#include "convforge/seqformat.hpp"
#include "json.hpp"

namespace convforge {

enum class GenerationMode { kSL, kRLPolicy, kCN };

std::string_view to_string(GenerationMode mode);
GenerationMode parse_generation_mode(std::string_view name);

struct GenerationRequest {
  std::string id;
  std::string summary;
  GenerationMode mode = GenerationMode::kSL;
  SamplingParams params;
  std::optional<std::vector<ControlState>> cn_controls;  // present iff mode == kCN

  void validate() const;
};

struct GeneratedConversation {
  Conversation conversation;  // id carries the source summary id
  bool well_formed = false;
  std::string raw_text;
  GenerationMode mode = GenerationMode::kSL;
  std::optional<std::vector<ControlState>> controls_used;
  std::string summary;
  int fallback_turns = 0;  // CN turns whose sampled utterance was empty
};

// Per-utterance token cap for CN generation.
inline constexpr int kMaxUtteranceTokens = 64;
inline constexpr std::string_view kFallbackUtterance = "...";

GeneratedConversation generate_sl(const CausalLM& model, std::string_view summary, const SamplingParams& params);

struct TurnRange {
  int min_turns = 4;
  int max_turns = 15;
};

std::vector<ControlState> sample_inference_controls(TurnRange range, std::span<const std::string> speakers,
                                                    std::uint64_t seed);

// Canonical speaker ids mentioned in a summary, padded to at least two
// (person_0, person_1, ...). Used as the speaker pool for CN inference.
std::vector<std::string> speakers_for_summary(std::string_view summary);

// Each control yields exactly one turn. params.min_length and the sampling
// seed apply per utterance; generation of a turn stops at <eos>, at any other
// special token, or after kMaxUtteranceTokens tokens.
GeneratedConversation generate_cn(const CausalLM& model, std::string_view summary,
                                  const std::vector<ControlState>& controls, const SamplingParams& params);

GeneratedConversation generate(const CausalLM& model, const GenerationRequest& request);

nlohmann::json to_json(const ControlState& control);
ControlState control_from_json(const nlohmann::json& j);

// JSONL record: {id, mode, summary, turns, well_formed, controls, raw_text}.
nlohmann::json to_json(const GeneratedConversation& g);
GeneratedConversation generated_from_json(const nlohmann::json& j);
void write_generated(const std::filesystem::path& path, std::span<const GeneratedConversation> items);
std::vector<GeneratedConversation> load_generated(const std::filesystem::path& path);

}  // namespace convforge

#endif  // CONVFORGE_GENERATORS_HPP_
