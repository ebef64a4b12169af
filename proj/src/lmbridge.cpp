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

#include "convforge/lmbridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include "convforge/errors.hpp"
#include "convforge/json_util.hpp"
#include "convforge/rng.hpp"
#include "convforge/text.hpp"
#include "convforge/tiny_backend.hpp"

namespace convforge {

using json = nlohmann::json;

void SamplingParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("sampling: top_p must lie in (0, 1]");
  if (top_k < 0) throw ValidationError("sampling: top_k must be >= 0");
  if (min_length < 0) throw ValidationError("sampling: min_length must be >= 0");
  if (max_length < 1) throw ValidationError("sampling: max_length must be >= 1");
  if (min_length > max_length) throw ValidationError("sampling: min_length exceeds max_length");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (gradient_accumulation < 1) throw ValidationError("train: gradient_accumulation must be >= 1");
  if (warmup_steps < 0) throw ValidationError("train: warmup_steps must be >= 0");
  if (!(max_grad_norm > 0.0)) throw ValidationError("train: max_grad_norm must be > 0");
  if (!(adam_epsilon > 0.0)) throw ValidationError("train: adam_epsilon must be > 0");
}

TrainConfig TrainConfig::causal_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::seq2seq_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 3e-5;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  cfg.gradient_accumulation = 1;
  cfg.warmup_steps = 0;
  return cfg;
}

StopTokens StopTokens::any_special() {
  StopTokens s;
  s.structural.assign(std::begin(kAllSpecialTokens), std::end(kAllSpecialTokens));
  s.speaker_tags = true;
  return s;
}

TrainStats IdentitySummarizer::finetune(std::span<const SummaryPair>, const TrainConfig&) { return {}; }

std::string IdentitySummarizer::summarize(std::string_view conversation_text) const {
  std::vector<std::string> words;
  for (auto& tok : surface_tokens(conversation_text)) {
    if (is_special_surface(tok)) continue;
    words.push_back(std::move(tok));
    if (static_cast<int>(words.size()) == max_target_length()) break;
  }
  return join(words, " ");
}

void IdentitySummarizer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "config.json") << json{{"backend", "identity"}, {"kind", "seq2seq"}}.dump(2) << '\n';
}

std::vector<int> nucleus_candidates(std::span<const double> logprobs, double top_p, int top_k,
                                    std::span<const int> banned) {
  std::vector<int> order;
  order.reserve(logprobs.size());
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (std::find(banned.begin(), banned.end(), static_cast<int>(i)) != banned.end()) continue;
    if (std::isinf(logprobs[i]) && logprobs[i] < 0) continue;
    order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logprobs[static_cast<std::size_t>(a)] > logprobs[static_cast<std::size_t>(b)];
  });
  if (top_k > 0 && order.size() > static_cast<std::size_t>(top_k)) order.resize(static_cast<std::size_t>(top_k));
  if (order.empty()) return order;

  double total = 0.0;
  for (int i : order) total += std::exp(logprobs[static_cast<std::size_t>(i)]);
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += std::exp(logprobs[static_cast<std::size_t>(order[keep])]) / total;
    ++keep;
    if (cum >= top_p) break;
  }
  order.resize(keep);
  return order;
}

std::vector<int> CausalLM::speaker_tag_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < vocab_size(); ++i) {
    const int id = static_cast<int>(i);
    if (is_speaker_tag(decode_ids(std::span<const int>(&id, 1)))) out.push_back(id);
  }
  return out;
}

SampleResult CausalLM::sample(const SequenceEncoding& prompt, const SamplingParams& params,
                              const StopTokens& stops) const {
  std::vector<int> ids = token_ids(prompt);
  const int limit = std::min(params.max_length, max_length());
  const int budget = limit - static_cast<int>(ids.size());
  const int min_new = std::min(params.min_length, std::max(budget, 0));

  std::vector<int> stop_ids;
  for (SpecialToken t : stops.structural) {
    if (auto id = token_id(surface(t))) stop_ids.push_back(*id);
  }
  if (stops.speaker_tags) {
    for (int id : speaker_tag_ids()) stop_ids.push_back(id);
  }

  Rng rng(params.seed);
  SampleResult out;
  std::vector<int> generated;
  for (int step = 0; step < budget; ++step) {
    const std::vector<double> lp = next_token_logprobs(ids);
    const bool allow_stop = step >= min_new;
    std::vector<int> cands =
        nucleus_candidates(lp, params.top_p, params.top_k, allow_stop ? std::span<const int>{} : stop_ids);
    if (cands.empty()) cands = nucleus_candidates(lp, 1.0, 0);  // only stops remain
    if (cands.empty()) break;

    double total = 0.0;
    for (int c : cands) total += std::exp(lp[static_cast<std::size_t>(c)]);
    double u = rng.uniform01() * total;
    int chosen = cands.front();
    for (int c : cands) {
      const double p = std::exp(lp[static_cast<std::size_t>(c)]);
      if (p <= 0.0) continue;
      chosen = c;  // rounding can leave u >= 0 after the last candidate
      u -= p;
      if (u < 0.0) break;
    }
    ids.push_back(chosen);
    out.token_ids.push_back(chosen);
    out.logprobs.push_back(lp[static_cast<std::size_t>(chosen)]);
    if (std::find(stop_ids.begin(), stop_ids.end(), chosen) != stop_ids.end()) {
      out.hit_stop = true;
      break;
    }
    generated.push_back(chosen);
  }
  out.text = decode_ids(generated);
  return out;
}

TrainStats finetune_causal(CausalLM& model, std::span<const SequenceEncoding> sequences, const TrainConfig& cfg) {
  if (sequences.empty()) throw ValidationError("finetune_causal: empty sequence list");
  cfg.validate();
  return model.finetune(sequences, cfg);
}

SampleResult sample_causal(const CausalLM& model, const SequenceEncoding& prompt, const SamplingParams& params,
                           const StopTokens& stops) {
  params.validate();
  const auto prompt_len = model.token_ids(prompt).size();
  if (static_cast<int>(prompt_len) >= std::min(params.max_length, model.max_length())) {
    throw ValidationError("sample_causal: prompt of " + std::to_string(prompt_len) +
                          " tokens does not fit max_length " +
                          std::to_string(std::min(params.max_length, model.max_length())));
  }
  return model.sample(prompt, params, stops);
}

TrainStats finetune_seq2seq(Seq2SeqModel& model, std::span<const SummaryPair> pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw ValidationError("finetune_seq2seq: empty pair list");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (trim(pairs[i].summary).empty()) {
      throw ValidationError("finetune_seq2seq: empty summary at pair " + std::to_string(i));
    }
  }
  cfg.validate();
  return model.finetune(pairs, cfg);
}

std::string summarize(const Seq2SeqModel& model, std::string_view conversation_text) {
  std::string s = model.summarize(conversation_text);
  auto words = split_whitespace(s);
  if (static_cast<int>(words.size()) > model.max_target_length()) {
    words.resize(static_cast<std::size_t>(model.max_target_length()));
    s = join(words, " ");
  }
  return s;
}

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, BackendFactory, std::less<>> factories;
};

Registry& registry() {
  static Registry* r = [] {
    auto* reg = new Registry;
    reg->factories.emplace("tiny", tiny::make_factory());
    BackendFactory identity;
    identity.new_seq2seq = [](std::span<const std::string>, const BackendOptions&) {
      return std::unique_ptr<Seq2SeqModel>(std::make_unique<IdentitySummarizer>());
    };
    identity.load_seq2seq = [](const std::filesystem::path&) {
      return std::unique_ptr<Seq2SeqModel>(std::make_unique<IdentitySummarizer>());
    };
    reg->factories.emplace("identity", std::move(identity));
    return reg;
  }();
  return *r;
}

std::string read_backend_name(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw ValidationError("not a model directory (missing config.json): " + dir.string());
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("unreadable model config in " + dir.string() + ": " + e.what());
  }
  if (!cfg.contains("backend") || !cfg["backend"].is_string()) {
    throw ValidationError("model config lacks a backend field: " + dir.string());
  }
  return cfg["backend"].get<std::string>();
}

}  // namespace

void register_backend(const std::string& name, BackendFactory factory) {
  auto& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  r.factories[name] = std::move(factory);
}

bool has_backend(std::string_view name) {
  auto& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  return r.factories.find(name) != r.factories.end();
}

const BackendFactory& backend(std::string_view name) {
  auto& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  auto it = r.factories.find(name);
  if (it == r.factories.end()) {
    if (name == "pretrained") {
      throw ValidationError(
          "backend 'pretrained' is not registered in this process; it is provided by the Python package "
          "(python -m convforge ... --backend pretrained)");
    }
    throw ValidationError("unknown backend: " + std::string(name));
  }
  return it->second;
}

std::vector<std::string> backend_names() {
  auto& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  std::vector<std::string> out;
  for (const auto& [k, v] : r.factories) out.push_back(k);
  return out;
}

std::unique_ptr<CausalLM> load_causal(const std::filesystem::path& dir) {
  const auto& f = backend(read_backend_name(dir));
  if (!f.load_causal) throw ValidationError("backend cannot load causal models: " + dir.string());
  return f.load_causal(dir);
}

std::unique_ptr<Seq2SeqModel> load_seq2seq(const std::filesystem::path& dir) {
  const auto& f = backend(read_backend_name(dir));
  if (!f.load_seq2seq) throw ValidationError("backend cannot load seq2seq models: " + dir.string());
  return f.load_seq2seq(dir);
}

json to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"gradient_accumulation", cfg.gradient_accumulation},
              {"warmup_steps", cfg.warmup_steps},
              {"max_grad_norm", cfg.max_grad_norm},
              {"adam_epsilon", cfg.adam_epsilon},
              {"mask_summary", cfg.mask_summary},
              {"seed", cfg.seed}};
}

json to_json(const SamplingParams& p) {
  return json{{"top_p", p.top_p},
              {"top_k", p.top_k},
              {"min_length", p.min_length},
              {"max_length", p.max_length},
              {"seed", p.seed}};
}

using jsonutil::reject_unknown;
using jsonutil::take;

void merge_json(const json& j, TrainConfig& cfg) {
  reject_unknown(j,
                 {"learning_rate", "epochs", "batch_size", "gradient_accumulation", "warmup_steps", "max_grad_norm",
                  "adam_epsilon", "mask_summary", "seed"},
                 "train");
  take(j, "learning_rate", cfg.learning_rate);
  take(j, "epochs", cfg.epochs);
  take(j, "batch_size", cfg.batch_size);
  take(j, "gradient_accumulation", cfg.gradient_accumulation);
  take(j, "warmup_steps", cfg.warmup_steps);
  take(j, "max_grad_norm", cfg.max_grad_norm);
  take(j, "adam_epsilon", cfg.adam_epsilon);
  take(j, "mask_summary", cfg.mask_summary);
  take(j, "seed", cfg.seed);
}

void merge_json(const json& j, SamplingParams& p) {
  reject_unknown(j, {"top_p", "top_k", "min_length", "max_length", "seed"}, "sampling");
  take(j, "top_p", p.top_p);
  take(j, "top_k", p.top_k);
  take(j, "min_length", p.min_length);
  take(j, "max_length", p.max_length);
  take(j, "seed", p.seed);
}

}  // namespace convforge
