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

#include "convforge/rlloop.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "convforge/errors.hpp"
#include "convforge/json_util.hpp"
#include "convforge/metrics.hpp"
#include "convforge/rng.hpp"
#include "convforge/seqformat.hpp"
#include "convforge/text.hpp"

namespace convforge {

using json = nlohmann::json;

RewardRecord compute_reward(const GeneratedConversation& conv, std::string_view summary_gt,
                            const Seq2SeqModel& summarizer) {
  if (trim(summary_gt).empty()) throw ValidationError("compute_reward: empty ground-truth summary");
  RewardRecord rec;
  rec.summary_gt = std::string(summary_gt);
  rec.generated_conversation = conv;
  const std::string text = linearize(conv.conversation);
  if (!text.empty()) rec.generated_summary = summarize(summarizer, text);
  rec.reward = std::clamp(rouge_n_f1(rec.generated_summary, summary_gt, 2), 0.0, 1.0);
  return rec;
}

void PPOConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("ppo config: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (forward_batch_size < 1) fail("forward_batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (init_kl_coef < 0.0) fail("init_kl_coef must be >= 0");
  if (!(kl_target > 0.0)) fail("kl_target must be > 0");
  if (horizon < 1) fail("horizon must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must be in (0, 1]");
  if (!(lam > 0.0 && lam <= 1.0)) fail("lam must be in (0, 1]");
  if (!(cliprange > 0.0)) fail("cliprange must be > 0");
  if (!(cliprange_value > 0.0)) fail("cliprange_value must be > 0");
  if (vf_coef < 0.0) fail("vf_coef must be >= 0");
  if (ppo_epochs < 1) fail("ppo_epochs must be >= 1");
  if (max_grad_norm < 0.0) fail("max_grad_norm must be >= 0");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

json to_json(const PPOConfig& c) {
  return json{{"steps", c.steps},
              {"batch_size", c.batch_size},
              {"forward_batch_size", c.forward_batch_size},
              {"learning_rate", c.learning_rate},
              {"init_kl_coef", c.init_kl_coef},
              {"kl_target", c.kl_target},
              {"horizon", c.horizon},
              {"gamma", c.gamma},
              {"lam", c.lam},
              {"cliprange", c.cliprange},
              {"cliprange_value", c.cliprange_value},
              {"vf_coef", c.vf_coef},
              {"ppo_epochs", c.ppo_epochs},
              {"adaptive_kl", c.adaptive_kl},
              {"whiten_rewards", c.whiten_rewards},
              {"max_grad_norm", c.max_grad_norm},
              {"adam_epsilon", c.adam_epsilon},
              {"checkpoint_every", c.checkpoint_every},
              {"seed", c.seed}};
}

void merge_json(const json& j, PPOConfig& c) {
  using jsonutil::take;
  jsonutil::reject_unknown(j,
                           {"steps", "batch_size", "forward_batch_size", "learning_rate", "init_kl_coef", "kl_target",
                            "horizon", "gamma", "lam", "cliprange", "cliprange_value", "vf_coef", "ppo_epochs",
                            "adaptive_kl", "whiten_rewards", "max_grad_norm", "adam_epsilon", "checkpoint_every",
                            "seed"},
                           "ppo");
  take(j, "steps", c.steps);
  take(j, "batch_size", c.batch_size);
  take(j, "forward_batch_size", c.forward_batch_size);
  take(j, "learning_rate", c.learning_rate);
  take(j, "init_kl_coef", c.init_kl_coef);
  take(j, "kl_target", c.kl_target);
  take(j, "horizon", c.horizon);
  take(j, "gamma", c.gamma);
  take(j, "lam", c.lam);
  take(j, "cliprange", c.cliprange);
  take(j, "cliprange_value", c.cliprange_value);
  take(j, "vf_coef", c.vf_coef);
  take(j, "ppo_epochs", c.ppo_epochs);
  take(j, "adaptive_kl", c.adaptive_kl);
  take(j, "whiten_rewards", c.whiten_rewards);
  take(j, "max_grad_norm", c.max_grad_norm);
  take(j, "adam_epsilon", c.adam_epsilon);
  take(j, "checkpoint_every", c.checkpoint_every);
  take(j, "seed", c.seed);
}

std::string PPOTrace::to_csv() const {
  std::ostringstream os;
  os << "step,mean_reward,mean_kl,policy_loss,value_loss,kl_coef\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.step << ',' << r.mean_reward << ',' << r.mean_kl << ',' << r.policy_loss << ',' << r.value_loss << ','
       << r.kl_coef << '\n';
  }
  return os.str();
}

AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                              double lam) {
  if (rewards.size() != values.size()) throw ValidationError("compute_gae: rewards and values differ in length");
  const std::size_t n = rewards.size();
  AdvantageEstimate out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double last = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_v = k + 1 < n ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_v - values[k];
    last = delta + gamma * lam * last;
    out.advantages[k] = last;
    out.returns[k] = last + values[k];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

std::vector<double> whiten(std::span<const double> xs) {
  std::vector<double> out(xs.begin(), xs.end());
  if (xs.empty()) return out;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  const double inv = 1.0 / std::sqrt(var + 1e-8);
  for (double& x : out) x = (x - mean) * inv;
  return out;
}

AdaptiveKLController::AdaptiveKLController(double init_kl_coef, double target, int horizon)
    : value_(init_kl_coef), target_(target), horizon_(horizon) {}

void AdaptiveKLController::update(double current_kl, int n_steps) {
  const double err = std::clamp(current_kl / target_ - 1.0, -0.2, 0.2);
  value_ *= 1.0 + err * static_cast<double>(n_steps) / static_cast<double>(horizon_);
}

namespace {

struct Rollout {
  std::size_t summary_index = 0;
  std::vector<int> prompt;
  std::vector<int> response;
  std::vector<double> old_logprobs;
  std::vector<double> old_values;
  std::vector<double> advantages;
  std::vector<double> returns;
  double score = 0.0;
  double kl = 0.0;
};

}  // namespace

PPOTrace train_rl(CausalLM& policy, const CausalLM& reference, const RewardModel& reward,
                  std::span<const std::string> summaries, const PPOConfig& cfg, const SamplingParams& params,
                  const CheckpointHook& on_checkpoint) {
  cfg.validate();
  params.validate();
  PPOTrace trace;
  if (cfg.steps == 0) return trace;
  if (summaries.empty()) throw ValidationError("train_rl: empty summary list");
  if (policy.vocab_size() != reference.vocab_size()) {
    throw ValidationError("train_rl: policy and reference vocabularies differ");
  }

  std::vector<SequenceEncoding> prompts;
  prompts.reserve(summaries.size());
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (trim(summaries[i]).empty()) throw ValidationError("train_rl: empty summary at index " + std::to_string(i));
    prompts.push_back(encode_sl(summaries[i], std::nullopt));
  }

  AdaptiveKLController kl_ctl(cfg.init_kl_coef, cfg.kl_target, cfg.horizon);
  const double clip_norm = cfg.max_grad_norm > 0.0 ? cfg.max_grad_norm : std::numeric_limits<double>::infinity();
  policy.reset_optimizer();

  for (int step = 0; step < cfg.steps; ++step) {
    const std::uint64_t step_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(step));
    Rng rng(step_seed);

    // Batch of summary indices: without replacement while the pool lasts.
    std::vector<std::size_t> order(summaries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> picks;
    while (static_cast<int>(picks.size()) < cfg.batch_size) {
      rng.shuffle(order);
      for (std::size_t k = 0; k < order.size() && static_cast<int>(picks.size()) < cfg.batch_size; ++k) {
        picks.push_back(order[k]);
      }
    }

    const double kl_coef = kl_ctl.value();
    std::vector<Rollout> batch;
    double reward_sum = 0.0;
    int non_empty = 0;
    for (std::size_t b = 0; b < picks.size(); ++b) {
      Rollout r;
      r.summary_index = picks[b];
      SamplingParams sp = params;
      sp.seed = mix_seed(step_seed, b + 1);
      const SequenceEncoding& prompt = prompts[r.summary_index];
      const SampleResult res = sample_causal(policy, prompt, sp, StopTokens::eos_only());
      if (res.token_ids.empty()) continue;
      if (!trim(res.text).empty()) ++non_empty;

      GeneratedConversation gen;
      DecodedConversation decoded = decode_conversation(res.text);
      gen.conversation = std::move(decoded.conversation);
      gen.well_formed = decoded.well_formed;
      gen.raw_text = res.text;
      gen.mode = GenerationMode::kRLPolicy;
      gen.summary = summaries[r.summary_index];
      r.score = std::clamp(reward.score(gen, summaries[r.summary_index]).reward, 0.0, 1.0);

      r.prompt = policy.token_ids(prompt);
      r.response = res.token_ids;
      PolicyScores old = policy.score(r.prompt, r.response);
      r.old_logprobs = std::move(old.logprobs);
      r.old_values = std::move(old.values);
      batch.push_back(std::move(r));
    }
    if (non_empty == 0) {
      ++trace.skipped_steps;
      continue;
    }

    std::vector<double> scores;
    for (const auto& r : batch) scores.push_back(r.score);
    for (double s : scores) reward_sum += s;
    if (cfg.whiten_rewards) scores = whiten(scores);

    // Per-token rewards: KL shaping everywhere, task score on the last token.
    double kl_sum = 0.0;
    std::vector<double> all_adv;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Rollout& r = batch[b];
      const PolicyScores ref = reference.score(r.prompt, r.response);
      const std::size_t n = r.response.size();
      std::vector<double> rewards(n);
      for (std::size_t t = 0; t < n; ++t) {
        const double kl_t = r.old_logprobs[t] - ref.logprobs[t];
        r.kl += kl_t;
        rewards[t] = -kl_coef * kl_t;
      }
      rewards[n - 1] += scores[b];
      kl_sum += r.kl;
      AdvantageEstimate est = compute_gae(rewards, r.old_values, cfg.gamma, cfg.lam);
      r.advantages = std::move(est.advantages);
      r.returns = std::move(est.returns);
      all_adv.insert(all_adv.end(), r.advantages.begin(), r.advantages.end());
    }
    {
      const std::vector<double> w = whiten(all_adv);
      std::size_t pos = 0;
      for (auto& r : batch) {
        for (double& a : r.advantages) a = w[pos++];
      }
    }

    double pg_total = 0.0;
    double vf_total = 0.0;
    int n_minibatches = 0;
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
      rng.shuffle(idx);
      for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.forward_batch_size)) {
        const std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(cfg.forward_batch_size));
        std::size_t n_tokens = 0;
        for (std::size_t k = start; k < stop; ++k) n_tokens += batch[idx[k]].response.size();
        const double inv_n = 1.0 / static_cast<double>(n_tokens);

        policy.zero_grad();
        double pg_loss = 0.0;
        double vf_loss = 0.0;
        for (std::size_t k = start; k < stop; ++k) {
          const Rollout& r = batch[idx[k]];
          const PolicyScores cur = policy.score(r.prompt, r.response);
          const std::size_t n = r.response.size();
          std::vector<double> d_lp(n), d_v(n);
          for (std::size_t t = 0; t < n; ++t) {
            const double a = r.advantages[t];
            const double ratio = std::exp(cur.logprobs[t] - r.old_logprobs[t]);
            const double unclipped = ratio * a;
            const double clipped = std::clamp(ratio, 1.0 - cfg.cliprange, 1.0 + cfg.cliprange) * a;
            pg_loss -= std::min(unclipped, clipped) * inv_n;
            // d(-min)/d(logprob): the ratio path is live unless the clipped
            // branch is both selected and saturated.
            const bool saturated = ratio < 1.0 - cfg.cliprange || ratio > 1.0 + cfg.cliprange;
            d_lp[t] = (clipped < unclipped && saturated) ? 0.0 : -a * ratio * inv_n;

            const double v = cur.values[t];
            const double v_old = r.old_values[t];
            const double v_clip = std::clamp(v, v_old - cfg.cliprange_value, v_old + cfg.cliprange_value);
            const double e1 = v - r.returns[t];
            const double e2 = v_clip - r.returns[t];
            vf_loss += 0.5 * std::max(e1 * e1, e2 * e2) * inv_n;
            double dv = 0.0;
            if (e1 * e1 >= e2 * e2) {
              dv = e1;
            } else if (v > v_old - cfg.cliprange_value && v < v_old + cfg.cliprange_value) {
              dv = e2;
            }
            d_v[t] = cfg.vf_coef * dv * inv_n;
          }
          policy.accumulate_gradient(r.prompt, r.response, d_lp, d_v);
        }
        policy.apply_gradients(cfg.learning_rate, clip_norm, cfg.adam_epsilon);
        pg_total += pg_loss;
        vf_total += vf_loss;
        ++n_minibatches;
      }
    }

    PPOTraceRow row;
    row.step = step;
    row.mean_reward = reward_sum / static_cast<double>(batch.size());
    row.mean_kl = kl_sum / static_cast<double>(batch.size());
    row.policy_loss = pg_total / n_minibatches;
    row.value_loss = vf_total / n_minibatches;
    row.kl_coef = kl_coef;
    trace.rows.push_back(row);

    if (cfg.adaptive_kl) kl_ctl.update(row.mean_kl, cfg.batch_size);
    if (on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      on_checkpoint(step + 1, policy);
    }
  }
  return trace;
}

PPOTrace train_rl(CausalLM& policy, const CausalLM& reference, const Seq2SeqModel& summarizer,
                  std::span<const std::string> summaries, const PPOConfig& cfg, const SamplingParams& params,
                  const CheckpointHook& on_checkpoint) {
  const SummarizerReward reward(summarizer);
  return train_rl(policy, reference, reward, summaries, cfg, params, on_checkpoint);
}

}  // namespace convforge
