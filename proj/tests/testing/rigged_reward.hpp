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

#ifndef CONVFORGE_TESTS_TESTING_RIGGED_REWARD_HPP_
#define CONVFORGE_TESTS_TESTING_RIGGED_REWARD_HPP_

#include <set>
#include <string>
#include <vector>

#include "convforge/corpus.hpp"
#include "convforge/lmbridge.hpp"
#include "convforge/rlloop.hpp"
#include "convforge/seqformat.hpp"
#include "convforge/text.hpp"
#include "convforge/tiny_backend.hpp"

namespace convforge::testing_util {

// Fraction of distinct summary words found anywhere in the generated text.
class UnigramCoverageReward final : public RewardModel {
 public:
  RewardRecord score(const GeneratedConversation& conv, std::string_view summary_gt) const override {
    RewardRecord rec;
    rec.summary_gt = std::string(summary_gt);
    rec.generated_conversation = conv;
    rec.generated_summary = conv.raw_text;
    std::set<std::string> want, have;
    for (auto& w : split_whitespace(summary_gt)) want.insert(std::move(w));
    for (auto& w : split_whitespace(conv.raw_text)) have.insert(std::move(w));
    if (want.empty()) return rec;
    int hit = 0;
    for (const auto& w : want) hit += static_cast<int>(have.count(w));
    rec.reward = static_cast<double>(hit) / static_cast<double>(want.size());
    return rec;
  }
};

struct RiggedRun {
  PPOTrace trace;
  double first_mean = 0.0;
  double last_mean = 0.0;
};

inline double window_mean(const std::vector<PPOTraceRow>& rows, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += rows[i].mean_reward;
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

inline PPOConfig rigged_ppo_config(std::uint64_t seed) {
  PPOConfig cfg;
  cfg.steps = 60;
  cfg.batch_size = 16;
  cfg.forward_batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.init_kl_coef = 0.01;
  cfg.seed = seed;
  return cfg;
}

inline RiggedRun run_rigged_reward(std::uint64_t seed) {
  const auto records = make_synthetic_corpus(100, seed);
  std::vector<SequenceEncoding> seqs;
  std::vector<std::string> texts, summaries;
  for (const auto& r : records) {
    seqs.push_back(encode_sl(r.summary, r.conversation));
    texts.push_back(seqs.back().text);
    summaries.push_back(r.summary);
  }
  auto policy = tiny::make_factory().new_causal(texts, BackendOptions{seed, {}});
  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 8;
  tc.gradient_accumulation = 1;
  tc.warmup_steps = 10;
  tc.epochs = 1;
  tc.seed = seed;
  finetune_causal(*policy, seqs, tc);
  const auto reference = policy->clone();

  SamplingParams sp;
  sp.min_length = 4;
  sp.max_length = 80;
  RiggedRun run;
  run.trace = train_rl(*policy, *reference, UnigramCoverageReward{}, summaries, rigged_ppo_config(seed), sp);
  const auto& rows = run.trace.rows;
  const std::size_t w = std::max<std::size_t>(1, rows.size() / 10);
  run.first_mean = window_mean(rows, 0, std::min(w, rows.size()));
  run.last_mean = window_mean(rows, rows.size() - std::min(w, rows.size()), rows.size());
  return run;
}

}  // namespace convforge::testing_util

#endif  // CONVFORGE_TESTS_TESTING_RIGGED_REWARD_HPP_
