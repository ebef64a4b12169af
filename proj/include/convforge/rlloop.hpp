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

// Summarize-then-overlap reward and PPO fine-tuning of a causal policy.

#ifndef CONVFORGE_RLLOOP_HPP_
#define CONVFORGE_RLLOOP_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/generators.hpp"
#include "convforge/lmbridge.hpp"
#include "json.hpp"

namespace convforge {

struct RewardRecord {
  std::string summary_gt;
  GeneratedConversation generated_conversation;
  std::string generated_summary;
  double reward = 0.0;  // in [0, 1]
};

// ROUGE-2 F1 between summarize(linearize(conv)) and summary_gt.
RewardRecord compute_reward(const GeneratedConversation& conv, std::string_view summary_gt,
                            const Seq2SeqModel& summarizer);

class RewardModel {
 public:
  virtual ~RewardModel() = default;
  // Must return a reward in [0, 1] and never throw on degenerate input.
  virtual RewardRecord score(const GeneratedConversation& conv, std::string_view summary_gt) const = 0;
};

class SummarizerReward final : public RewardModel {
 public:
  explicit SummarizerReward(const Seq2SeqModel& summarizer) : summarizer_(summarizer) {}
  RewardRecord score(const GeneratedConversation& conv, std::string_view summary_gt) const override {
    return compute_reward(conv, summary_gt, summarizer_);
  }

 private:
  const Seq2SeqModel& summarizer_;
};

struct PPOConfig {
  int steps = 10000;
  int batch_size = 16;
  int forward_batch_size = 4;
  double learning_rate = 1.41e-5;
  double init_kl_coef = 0.2;
  double kl_target = 6.0;
  int horizon = 10000;
  double gamma = 1.0;
  double lam = 0.95;
  double cliprange = 0.2;
  double cliprange_value = 0.2;
  double vf_coef = 0.1;

  int ppo_epochs = 4;
  bool adaptive_kl = true;
  bool whiten_rewards = false;
  double max_grad_norm = 0.0;  // 0 disables clipping
  double adam_epsilon = 1e-8;
  int checkpoint_every = 0;    // 0 disables checkpoints
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const PPOConfig& cfg);
void merge_json(const nlohmann::json& j, PPOConfig& cfg);

struct PPOTraceRow {
  int step = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double kl_coef = 0.0;
};

struct PPOTrace {
  std::vector<PPOTraceRow> rows;
  int skipped_steps = 0;  // steps whose rollouts were all empty

  std::string to_csv() const;
};

// GAE over one trajectory with V(T) = 0.
struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;
};
AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                              double lam);

// min(r*A, clip(r, 1-eps, 1+eps)*A): the objective to maximize.
double clipped_surrogate(double ratio, double advantage, double eps);

// Shift to zero mean and scale to unit variance (population).
std::vector<double> whiten(std::span<const double> xs);

class AdaptiveKLController {
 public:
  AdaptiveKLController(double init_kl_coef, double target, int horizon);
  void update(double current_kl, int n_steps);
  double value() const { return value_; }

 private:
  double value_;
  double target_;
  int horizon_;
};

using CheckpointHook = std::function<void(int step, const CausalLM& policy)>;

// Updates `policy` in place and returns the per-step trace.
PPOTrace train_rl(CausalLM& policy, const CausalLM& reference, const RewardModel& reward,
                  std::span<const std::string> summaries, const PPOConfig& cfg, const SamplingParams& params,
                  const CheckpointHook& on_checkpoint = {});

PPOTrace train_rl(CausalLM& policy, const CausalLM& reference, const Seq2SeqModel& summarizer,
                  std::span<const std::string> summaries, const PPOConfig& cfg, const SamplingParams& params,
                  const CheckpointHook& on_checkpoint = {});

}  // namespace convforge

#endif  // CONVFORGE_RLLOOP_HPP_
