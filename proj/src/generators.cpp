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

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "convforge/errors.hpp"
#include "convforge/rng.hpp"
#include "convforge/text.hpp"

namespace convforge {

using json = nlohmann::json;

std::string_view to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::kSL:
      return "sl";
    case GenerationMode::kRLPolicy:
      return "rl";
    case GenerationMode::kCN:
      return "cn";
  }
  return "sl";
}

GenerationMode parse_generation_mode(std::string_view name) {
  const std::string n = to_lower_ascii(name);
  if (n == "sl") return GenerationMode::kSL;
  if (n == "rl" || n == "rl_policy") return GenerationMode::kRLPolicy;
  if (n == "cn") return GenerationMode::kCN;
  throw ValidationError("unknown generation mode: " + std::string(name));
}

void GenerationRequest::validate() const {
  if (trim(summary).empty()) throw ValidationError("generation request '" + id + "': empty summary");
  if ((mode == GenerationMode::kCN) != cn_controls.has_value()) {
    throw ValidationError("generation request '" + id + "': controls must be given exactly for CN mode");
  }
  if (cn_controls) validate_countdown(*cn_controls);
  params.validate();
}

GeneratedConversation generate_sl(const CausalLM& model, std::string_view summary, const SamplingParams& params) {
  if (trim(summary).empty()) throw ValidationError("generate_sl: empty summary");
  const SequenceEncoding prompt = encode_sl(summary, std::nullopt);
  const SampleResult res = sample_causal(model, prompt, params, StopTokens::eos_only());
  DecodedConversation decoded = decode_conversation(res.text);
  GeneratedConversation out;
  out.conversation = std::move(decoded.conversation);
  out.well_formed = decoded.well_formed;
  out.raw_text = res.text;
  out.mode = GenerationMode::kSL;
  out.summary = std::string(summary);
  return out;
}

std::vector<ControlState> sample_inference_controls(TurnRange range, std::span<const std::string> speakers,
                                                    std::uint64_t seed) {
  if (speakers.empty()) throw ValidationError("sample_inference_controls: empty speaker list");
  if (range.min_turns < 1 || range.max_turns < range.min_turns) {
    throw ValidationError("sample_inference_controls: invalid turn range [" + std::to_string(range.min_turns) + ", " +
                          std::to_string(range.max_turns) + "]");
  }
  for (const auto& s : speakers) {
    if (!is_canonical_speaker(s)) throw ValidationError("sample_inference_controls: non-canonical speaker '" + s + "'");
  }
  Rng rng(seed);
  const auto n = static_cast<int>(rng.uniform_int(range.min_turns, range.max_turns));
  std::vector<ControlState> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ControlState c;
    c.turns_to_go = n - i;
    c.next_speaker = speakers[rng.uniform_index(speakers.size())];
    c.next_length = kAllBuckets[rng.uniform_index(std::size(kAllBuckets))];
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::string> speakers_for_summary(std::string_view summary) {
  std::set<int> found;
  for (const auto& tok : split_whitespace(summary)) {
    // Strip trailing punctuation such as "person_1." or "person_0's".
    std::string_view t = tok;
    std::size_t end = 0;
    while (end < t.size() && is_word_char(t[end])) ++end;
    if (auto k = speaker_index(t.substr(0, end))) found.insert(*k);
  }
  for (int k = 0; found.size() < 2; ++k) found.insert(k);
  std::vector<std::string> out;
  for (int k : found) out.push_back(canonical_speaker(k));
  return out;
}

GeneratedConversation generate_cn(const CausalLM& model, std::string_view summary,
                                  const std::vector<ControlState>& controls, const SamplingParams& params) {
  if (trim(summary).empty()) throw ValidationError("generate_cn: empty summary");
  validate_countdown(controls);
  params.validate();

  GeneratedConversation out;
  out.mode = GenerationMode::kCN;
  out.summary = std::string(summary);
  out.controls_used = controls;
  std::vector<Turn> turns;
  const int model_limit = std::min(params.max_length, model.max_length());

  for (std::size_t i = 0; i < controls.size(); ++i) {
    // Oldest context turns are dropped if the prompt would not leave room for
    // at least one generated token.
    std::size_t first_ctx = 0;
    SequenceEncoding prompt;
    int prompt_len = 0;
    while (true) {
      std::vector<Turn> ctx(turns.begin() + static_cast<std::ptrdiff_t>(first_ctx), turns.end());
      prompt = encode_cn(summary, ctx, controls[i], std::nullopt);
      prompt_len = static_cast<int>(model.token_ids(prompt).size());
      if (prompt_len < model_limit || first_ctx == turns.size()) break;
      ++first_ctx;
    }

    std::string utterance;
    if (prompt_len < model_limit) {
      SamplingParams p = params;
      p.seed = mix_seed(params.seed, i);
      p.max_length = std::min(model_limit, prompt_len + kMaxUtteranceTokens);
      p.min_length = std::min(params.min_length, p.max_length - prompt_len);
      const SampleResult res = model.sample(prompt, p, StopTokens::any_special());
      utterance = std::string(trim(res.text));
    }
    if (utterance.empty()) {
      utterance = std::string(kFallbackUtterance);
      ++out.fallback_turns;
    }
    turns.push_back(Turn{controls[i].next_speaker, std::move(utterance)});
  }
  out.conversation = Conversation("", std::move(turns));
  out.well_formed = !out.conversation.empty();
  out.raw_text = linearize(out.conversation);
  return out;
}

GeneratedConversation generate(const CausalLM& model, const GenerationRequest& request) {
  request.validate();
  GeneratedConversation out;
  if (request.mode == GenerationMode::kCN) {
    out = generate_cn(model, request.summary, *request.cn_controls, request.params);
  } else {
    out = generate_sl(model, request.summary, request.params);
    out.mode = request.mode;
  }
  out.conversation.set_id(request.id);
  return out;
}

json to_json(const ControlState& c) {
  return json{{"turns_to_go", c.turns_to_go},
              {"speaker", c.next_speaker},
              {"length", std::string(to_string(c.next_length))}};
}

ControlState control_from_json(const json& j) {
  ControlState c;
  c.turns_to_go = j.at("turns_to_go").get<int>();
  c.next_speaker = j.at("speaker").get<std::string>();
  auto b = parse_bucket(j.at("length").get<std::string>());
  if (!b) throw ValidationError("unknown length bucket: " + j.at("length").dump());
  c.next_length = *b;
  return c;
}

json to_json(const GeneratedConversation& g) {
  json turns = json::array();
  for (const auto& t : g.conversation.turns()) turns.push_back({{"speaker", t.speaker}, {"text", t.text}});
  json controls = nullptr;
  if (g.controls_used) {
    controls = json::array();
    for (const auto& c : *g.controls_used) controls.push_back(to_json(c));
  }
  json out;
  out["id"] = g.conversation.id();
  out["mode"] = std::string(to_string(g.mode));
  out["summary"] = g.summary;
  out["turns"] = std::move(turns);
  out["well_formed"] = g.well_formed;
  out["controls"] = std::move(controls);
  out["raw_text"] = g.raw_text;
  return out;
}

GeneratedConversation generated_from_json(const json& j) {
  GeneratedConversation g;
  try {
    std::vector<Turn> turns;
    for (const auto& t : j.at("turns")) turns.push_back(Turn{t.at("speaker").get<std::string>(), t.at("text").get<std::string>()});
    g.conversation = Conversation(j.at("id").get<std::string>(), std::move(turns));
    g.mode = parse_generation_mode(j.at("mode").get<std::string>());
    g.summary = j.value("summary", std::string());
    g.well_formed = j.value("well_formed", !g.conversation.empty());
    g.raw_text = j.value("raw_text", std::string());
    if (j.contains("controls") && j["controls"].is_array()) {
      std::vector<ControlState> cs;
      for (const auto& c : j["controls"]) cs.push_back(control_from_json(c));
      g.controls_used = std::move(cs);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed generated record: ") + e.what());
  }
  return g;
}

void write_generated(const std::filesystem::path& path, std::span<const GeneratedConversation> items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  for (const auto& g : items) out << to_json(g).dump() << '\n';
}

std::vector<GeneratedConversation> load_generated(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<GeneratedConversation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("malformed JSON at line " + std::to_string(line_no) + " of " + path.string());
    }
    out.push_back(generated_from_json(j));
  }
  return out;
}

}  // namespace convforge
