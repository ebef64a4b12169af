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

// Backend-neutral interface to a decoder-only language model (conversation
// generator / RL policy) and an encoder-decoder summarizer.
//
// Nucleus sampling, stop handling and length accounting live here, written
// once against CausalLM::next_token_logprobs(). Backends supply the model.

#ifndef CONVFORGE_LMBRIDGE_HPP_
#define CONVFORGE_LMBRIDGE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/seqformat.hpp"
#include "json.hpp"

namespace convforge {

inline constexpr int kCausalMaxLength = 512;
inline constexpr int kSeq2SeqMaxSource = 512;
inline constexpr int kSeq2SeqMaxTarget = 80;

struct SamplingParams {
  double top_p = 0.95;
  int top_k = 0;  // 0 disables
  int min_length = 20;
  int max_length = kCausalMaxLength;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 6.25e-5;
  int epochs = 10;
  int batch_size = 4;
  int gradient_accumulation = 4;
  int warmup_steps = 500;
  double max_grad_norm = 1.0;
  double adam_epsilon = 1e-8;
  // Exclude summary-span targets from the loss. Off: loss covers every token
  // after <bos>.
  bool mask_summary = false;
  std::uint64_t seed = 0;

  void validate() const;

  // Generator fine-tuning defaults.
  static TrainConfig causal_defaults();
  // Summarizer fine-tuning defaults.
  static TrainConfig seq2seq_defaults();
};

struct TrainStats {
  std::vector<double> epoch_loss;  // token-weighted mean cross-entropy
  std::int64_t skipped_sequences = 0;
  std::int64_t optimizer_steps = 0;
};

struct StopTokens {
  std::vector<SpecialToken> structural;
  bool speaker_tags = false;

  static StopTokens eos_only() { return {{SpecialToken::kEos}, false}; }
  static StopTokens any_special();
};

struct SampleResult {
  std::string text;              // generated text up to (not including) the stop token
  std::vector<int> token_ids;    // generated ids, including the stop token if one was hit
  std::vector<double> logprobs;  // log p(token) under the unfiltered model distribution
  bool hit_stop = false;
};

// Per-response-token quantities used by the policy optimizer.
struct PolicyScores {
  std::vector<double> logprobs;
  std::vector<double> values;
};

class CausalLM {
 public:
  virtual ~CausalLM() = default;

  virtual std::string backend_name() const = 0;
  virtual int max_length() const { return kCausalMaxLength; }

  virtual std::vector<int> token_ids(const SequenceEncoding& seq) const = 0;
  virtual std::string decode_ids(std::span<const int> ids) const = 0;
  virtual std::optional<int> token_id(std::string_view surface) const = 0;
  virtual std::size_t vocab_size() const = 0;
  // Ids of every `<person_k>` tag in the vocabulary.
  virtual std::vector<int> speaker_tag_ids() const;

  virtual TrainStats finetune(std::span<const SequenceEncoding> sequences, const TrainConfig& cfg) = 0;

  // Normalized log-probabilities of the next token, one per vocabulary entry.
  virtual std::vector<double> next_token_logprobs(std::span<const int> context) const = 0;

  virtual SampleResult sample(const SequenceEncoding& prompt, const SamplingParams& params,
                              const StopTokens& stops) const;

  // Log-probability and value estimate for every response token, evaluated in
  // one teacher-forced pass over prompt + response.
  virtual PolicyScores score(std::span<const int> prompt, std::span<const int> response) const = 0;

  // Adds dL/d(params) for a loss L, given dL/d(logprob) and dL/d(value) for
  // each response token as returned by score().
  virtual void accumulate_gradient(std::span<const int> prompt, std::span<const int> response,
                                   std::span<const double> d_logprobs, std::span<const double> d_values) = 0;
  virtual void zero_grad() = 0;
  virtual void reset_optimizer() = 0;
  // Clips the accumulated gradient to max_grad_norm, takes one Adam descent
  // step on L and returns the pre-clip norm.
  virtual double apply_gradients(double learning_rate, double max_grad_norm, double adam_epsilon) = 0;

  virtual std::unique_ptr<CausalLM> clone() const = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
};

struct SummaryPair {
  std::string conversation_text;
  std::string summary;
};

class Seq2SeqModel {
 public:
  virtual ~Seq2SeqModel() = default;

  virtual std::string backend_name() const = 0;
  virtual int max_source_length() const { return kSeq2SeqMaxSource; }
  virtual int max_target_length() const { return kSeq2SeqMaxTarget; }

  virtual TrainStats finetune(std::span<const SummaryPair> pairs, const TrainConfig& cfg) = 0;
  // Deterministic decoding.
  virtual std::string summarize(std::string_view conversation_text) const = 0;

  virtual std::unique_ptr<Seq2SeqModel> clone() const = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
};

// Returns its input with special-token markup removed and whitespace
// collapsed, truncated to the target length. A fixed summarizer for reward
// checks and diagnostics.
class IdentitySummarizer final : public Seq2SeqModel {
 public:
  std::string backend_name() const override { return "identity"; }
  TrainStats finetune(std::span<const SummaryPair> pairs, const TrainConfig& cfg) override;
  std::string summarize(std::string_view conversation_text) const override;
  std::unique_ptr<Seq2SeqModel> clone() const override { return std::make_unique<IdentitySummarizer>(); }
  void save(const std::filesystem::path& dir) const override;
};

// Validating entry points.
TrainStats finetune_causal(CausalLM& model, std::span<const SequenceEncoding> sequences, const TrainConfig& cfg);
SampleResult sample_causal(const CausalLM& model, const SequenceEncoding& prompt, const SamplingParams& params,
                           const StopTokens& stops);
TrainStats finetune_seq2seq(Seq2SeqModel& model, std::span<const SummaryPair> pairs, const TrainConfig& cfg);
std::string summarize(const Seq2SeqModel& model, std::string_view conversation_text);

// Indices surviving top-k then top-p filtering of a log-probability vector,
// most probable first. `banned` entries are removed before filtering.
std::vector<int> nucleus_candidates(std::span<const double> logprobs, double top_p, int top_k,
                                    std::span<const int> banned = {});

// ---------------------------------------------------------------------------
// Backend registry

struct BackendOptions {
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct BackendFactory {
  // `corpus` lists the texts the model will see, for vocabulary building.
  std::function<std::unique_ptr<CausalLM>(std::span<const std::string> corpus, const BackendOptions&)> new_causal;
  std::function<std::unique_ptr<Seq2SeqModel>(std::span<const std::string> corpus, const BackendOptions&)>
      new_seq2seq;
  std::function<std::unique_ptr<CausalLM>(const std::filesystem::path&)> load_causal;
  std::function<std::unique_ptr<Seq2SeqModel>(const std::filesystem::path&)> load_seq2seq;
};

// Registration is expected at startup, before any worker threads exist.
void register_backend(const std::string& name, BackendFactory factory);
bool has_backend(std::string_view name);
const BackendFactory& backend(std::string_view name);
std::vector<std::string> backend_names();

// Dispatch on the "backend" field of <dir>/config.json.
std::unique_ptr<CausalLM> load_causal(const std::filesystem::path& dir);
std::unique_ptr<Seq2SeqModel> load_seq2seq(const std::filesystem::path& dir);

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SamplingParams& params);
// Fields absent from `j` keep their current value.
void merge_json(const nlohmann::json& j, TrainConfig& cfg);
void merge_json(const nlohmann::json& j, SamplingParams& params);

}  // namespace convforge

#endif  // CONVFORGE_LMBRIDGE_HPP_
