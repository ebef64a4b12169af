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

// End-to-end augmentation experiments and the oversampling baseline.

#ifndef CONVFORGE_HARNESS_HPP_
#define CONVFORGE_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/corpus.hpp"
#include "convforge/generators.hpp"
#include "convforge/lmbridge.hpp"
#include "convforge/metrics.hpp"
#include "convforge/rlloop.hpp"
#include "json.hpp"

namespace convforge {

// Every tunable of a run. Layering: defaults() < backend profile < config
// file < command-line flags.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string backend = "tiny";
  std::string summarizer_backend;  // empty: same as `backend`
  nlohmann::json backend_options = nlohmann::json::object();
  TrainConfig generator_train = TrainConfig::causal_defaults();
  TrainConfig summarizer_train = TrainConfig::seq2seq_defaults();
  SamplingParams sampling;     // SL and RL generation
  SamplingParams cn_sampling;  // per-utterance CN generation
  PPOConfig ppo;
  TurnRange cn_turns;

  static ExperimentConfig defaults();
  // Small-model settings for the built-in "tiny" backend.
  static ExperimentConfig tiny_profile();
  static ExperimentConfig for_backend(std::string_view backend);

  const std::string& summarizer_backend_name() const {
    return summarizer_backend.empty() ? backend : summarizer_backend;
  }
  void merge(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

enum class AugmentMethod { kSL, kRL, kCN, kOversample };

std::string_view to_string(AugmentMethod method);
AugmentMethod parse_augment_method(std::string_view name);

struct AugmentationPlan {
  double x_percent = 30.0;
  AugmentMethod method = AugmentMethod::kCN;
  std::uint64_t seed = 0;
  bool replace_mode = false;     // drop the holdout's original pairs
  int samples_per_summary = 1;
  bool with_baseline = false;    // also train on the unaugmented set
  ExperimentConfig config;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SplitAudit {
  bool passed = true;
  std::vector<std::string> problems;
};

struct Incidents {
  std::int64_t malformed_generations = 0;
  std::int64_t fallback_turns = 0;
  std::int64_t skipped_ppo_steps = 0;
};

struct ExperimentReport {
  nlohmann::json plan;
  std::string method;
  std::int64_t original_size = 0;
  std::int64_t augmented_size = 0;
  std::int64_t gen_train_size = 0;
  std::int64_t holdout_size = 0;
  MetricReport summary_metrics;
  std::optional<MetricReport> baseline_metrics;
  nlohmann::json artifacts = nlohmann::json::object();
  SplitAudit audit;
  Incidents incidents;

  std::vector<GeneratedConversation> generated;
  PPOTrace trace;

  nlohmann::json to_json() const;
};

struct RunOptions {
  // Model checkpoints are written here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Artifact paths under this directory are reported relative to it.
  std::optional<std::filesystem::path> artifact_root;
};

nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const CorpusStats& stats);
// Metric values scaled by 100, one row per metric.
std::string render_metric_table(const MetricReport& report);

// Building blocks shared by the pipeline and the CLI. `extra_texts` are added
// to the vocabulary corpus (e.g. the summaries that will be used as prompts).
std::unique_ptr<CausalLM> train_sl_generator(std::span<const SummaryRecord> records, const ExperimentConfig& cfg,
                                             std::uint64_t seed, std::span<const std::string> extra_texts = {},
                                             TrainStats* stats = nullptr);
std::unique_ptr<CausalLM> train_cn_generator(std::span<const SummaryRecord> records, const ExperimentConfig& cfg,
                                             std::uint64_t seed, std::span<const std::string> extra_texts = {},
                                             TrainStats* stats = nullptr);
std::unique_ptr<Seq2SeqModel> train_summarizer(std::span<const SummaryPair> pairs, const ExperimentConfig& cfg,
                                               std::uint64_t seed, TrainStats* stats = nullptr);
std::vector<SummaryPair> summary_pairs(std::span<const SummaryRecord> records);
SummaryPair summary_pair(const GeneratedConversation& generated);

// Summarizes every test conversation and scores against the test summaries.
MetricReport evaluate_summarizer(const Seq2SeqModel& summarizer, std::span<const SummaryRecord> test);

// One conversation per summary (times samples), ids "<summary id>#gen" with
// "#k" appended for k > 0.
std::vector<GeneratedConversation> generate_for_records(const CausalLM& generator, GenerationMode mode,
                                                        std::span<const SummaryRecord> records,
                                                        const ExperimentConfig& cfg, std::uint64_t seed,
                                                        int samples_per_summary = 1);

std::string source_id(std::string_view generated_id);

ExperimentReport run_augmentation(std::span<const SummaryRecord> train, std::span<const SummaryRecord> test,
                                  const AugmentationPlan& plan, const RunOptions& options = {});

ExperimentReport run_oversampling_baseline(std::span<const SummaryRecord> train,
                                           std::span<const SummaryRecord> test, double pct, std::uint64_t seed,
                                           const ExperimentConfig& cfg, const RunOptions& options = {});

// report.json, generated.jsonl and trace.csv.
void write_report_files(const ExperimentReport& report, const std::filesystem::path& out_dir);

}  // namespace convforge

#endif  // CONVFORGE_HARNESS_HPP_
