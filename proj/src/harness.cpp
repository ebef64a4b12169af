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

#include "convforge/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "convforge/errors.hpp"
#include "convforge/json_util.hpp"
#include "convforge/rng.hpp"
#include "convforge/seqformat.hpp"
#include "convforge/text.hpp"

namespace convforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Salts for the independent streams derived from a run seed.
enum Salt : std::uint64_t {
  kGeneratorInit = 11,
  kGeneratorTrain = 12,
  kSummarizerInit = 21,
  kSummarizerTrain = 22,
  kGeneration = 31,
  kPolicyOptimization = 41,
  kOversample = 51,
  kRewardSummarizer = 61,
};

BackendOptions backend_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  BackendOptions o;
  o.seed = seed;
  o.extra = cfg.backend_options;
  return o;
}

std::string report_path(const fs::path& p, const RunOptions& options) {
  if (options.artifact_root) {
    const fs::path rel = p.lexically_relative(*options.artifact_root);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return p.generic_string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.cn_sampling.min_length = 1;
  return c;
}

ExperimentConfig ExperimentConfig::tiny_profile() {
  ExperimentConfig c = defaults();
  c.backend = "tiny";
  c.generator_train.learning_rate = 3e-3;
  c.generator_train.batch_size = 8;
  c.generator_train.gradient_accumulation = 1;
  c.generator_train.warmup_steps = 10;
  c.generator_train.epochs = 10;
  c.summarizer_train.learning_rate = 3e-3;
  c.summarizer_train.batch_size = 8;
  c.summarizer_train.warmup_steps = 10;
  c.summarizer_train.epochs = 10;
  c.sampling.min_length = 4;
  c.ppo.steps = 40;
  c.ppo.learning_rate = 1e-3;
  return c;
}

ExperimentConfig ExperimentConfig::for_backend(std::string_view backend) {
  if (backend == "tiny") return tiny_profile();
  ExperimentConfig c = defaults();
  c.backend = std::string(backend);
  return c;
}

void ExperimentConfig::merge(const json& j) {
  using jsonutil::take;
  jsonutil::reject_unknown(j,
                           {"seed", "backend", "summarizer_backend", "backend_options", "generator_train",
                            "summarizer_train", "sampling", "cn_sampling", "ppo", "cn_turns", "augment"},
                           "root");
  take(j, "seed", seed);
  take(j, "backend", backend);
  take(j, "summarizer_backend", summarizer_backend);
  if (j.contains("backend_options")) {
    if (!j["backend_options"].is_object()) throw ValidationError("config section 'backend_options' must be an object");
    backend_options.merge_patch(j["backend_options"]);
  }
  if (j.contains("generator_train")) convforge::merge_json(j["generator_train"], generator_train);
  if (j.contains("summarizer_train")) convforge::merge_json(j["summarizer_train"], summarizer_train);
  if (j.contains("sampling")) convforge::merge_json(j["sampling"], sampling);
  if (j.contains("cn_sampling")) convforge::merge_json(j["cn_sampling"], cn_sampling);
  if (j.contains("ppo")) convforge::merge_json(j["ppo"], ppo);
  if (j.contains("cn_turns")) {
    const json& t = j["cn_turns"];
    jsonutil::reject_unknown(t, {"min_turns", "max_turns"}, "cn_turns");
    take(t, "min_turns", cn_turns.min_turns);
    take(t, "max_turns", cn_turns.max_turns);
  }
}

json ExperimentConfig::to_json() const {
  return json{{"seed", seed},
              {"backend", backend},
              {"summarizer_backend", summarizer_backend_name()},
              {"backend_options", backend_options},
              {"generator_train", convforge::to_json(generator_train)},
              {"summarizer_train", convforge::to_json(summarizer_train)},
              {"sampling", convforge::to_json(sampling)},
              {"cn_sampling", convforge::to_json(cn_sampling)},
              {"ppo", convforge::to_json(ppo)},
              {"cn_turns", {{"min_turns", cn_turns.min_turns}, {"max_turns", cn_turns.max_turns}}}};
}

void ExperimentConfig::validate() const {
  generator_train.validate();
  summarizer_train.validate();
  sampling.validate();
  cn_sampling.validate();
  ppo.validate();
  if (cn_turns.min_turns < 1 || cn_turns.max_turns < cn_turns.min_turns) {
    throw ValidationError("cn_turns: need 1 <= min_turns <= max_turns");
  }
  if (!has_backend(backend)) (void)convforge::backend(backend);  // throws with the list of known backends
  if (!has_backend(summarizer_backend_name())) (void)convforge::backend(summarizer_backend_name());
}

std::string_view to_string(AugmentMethod method) {
  switch (method) {
    case AugmentMethod::kSL:
      return "sl";
    case AugmentMethod::kRL:
      return "rl";
    case AugmentMethod::kCN:
      return "cn";
    case AugmentMethod::kOversample:
      return "oversample";
  }
  return "cn";
}

AugmentMethod parse_augment_method(std::string_view name) {
  const std::string n = to_lower_ascii(name);
  if (n == "sl") return AugmentMethod::kSL;
  if (n == "rl") return AugmentMethod::kRL;
  if (n == "cn") return AugmentMethod::kCN;
  if (n == "oversample") return AugmentMethod::kOversample;
  throw ValidationError("unknown augmentation method: " + std::string(name) + " (expected sl, rl, cn or oversample)");
}

void AugmentationPlan::validate() const {
  if (!std::isfinite(x_percent)) throw ValidationError("x_percent must be finite");
  if (method == AugmentMethod::kOversample) {
    if (!(x_percent > 0.0)) throw ValidationError("oversampling percentage must be > 0");
  } else if (!(x_percent > 0.0 && x_percent < 100.0)) {
    throw ValidationError("x_percent must be in (0, 100)");
  }
  if (samples_per_summary < 1) throw ValidationError("samples_per_summary must be >= 1");
  config.validate();
}

json AugmentationPlan::to_json() const {
  return json{{"x_percent", x_percent},
              {"method", std::string(to_string(method))},
              {"seed", seed},
              {"replace_mode", replace_mode},
              {"samples_per_summary", samples_per_summary},
              {"with_baseline", with_baseline},
              {"config", config.to_json()}};
}

// ---------------------------------------------------------------------------
// Reports

json to_json(const CorpusStats& s) {
  return json{{"avg_turns", s.avg_turns},
              {"std_turns", s.std_turns},
              {"avg_tokens_per_turn", s.avg_tokens_per_turn},
              {"std_tokens_per_turn", s.std_tokens_per_turn},
              {"n_conversations", s.n_conversations}};
}

json to_json(const MetricReport& r) {
  json j{{"bleu4", r.bleu4},         {"corpus_bleu4", r.corpus_bleu4}, {"meteor", r.meteor},
         {"rouge1_f1", r.rouge1_f1}, {"rouge2_f1", r.rouge2_f1},       {"rougeL_f1", r.rougeL_f1},
         {"n_pairs", r.n_pairs},     {"notes", r.notes}};
  if (r.generated_stats) j["generated_stats"] = to_json(*r.generated_stats);
  return j;
}

std::string render_metric_table(const MetricReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto row = [&](const char* name, double v) { os << std::left << std::setw(14) << name << std::right << std::setw(8) << v * 100.0 << '\n'; };
  row("BLEU-4", r.bleu4);
  row("corpus BLEU-4", r.corpus_bleu4);
  row("METEOR", r.meteor);
  row("ROUGE-1", r.rouge1_f1);
  row("ROUGE-2", r.rouge2_f1);
  row("ROUGE-L", r.rougeL_f1);
  os << std::left << std::setw(14) << "pairs" << std::right << std::setw(8) << r.n_pairs << '\n';
  for (const auto& n : r.notes) os << "note: " << n << '\n';
  return os.str();
}

json ExperimentReport::to_json() const {
  json j;
  j["method"] = method;
  j["plan"] = plan;
  j["dataset_sizes"] = {{"original", original_size},
                        {"augmented", augmented_size},
                        {"gen_train", gen_train_size},
                        {"holdout", holdout_size}};
  j["summary_metrics"] = convforge::to_json(summary_metrics);
  j["baseline_metrics"] = baseline_metrics ? convforge::to_json(*baseline_metrics) : json(nullptr);
  j["artifacts"] = artifacts;
  j["audit"] = {{"passed", audit.passed}, {"problems", audit.problems}};
  j["incidents"] = {{"malformed_generations", incidents.malformed_generations},
                    {"fallback_turns", incidents.fallback_turns},
                    {"skipped_ppo_steps", incidents.skipped_ppo_steps}};
  return j;
}

void write_report_files(const ExperimentReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw RuntimeFailure("cannot create " + out_dir.string() + ": " + ec.message());
  {
    std::ofstream out(out_dir / "report.json", std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + (out_dir / "report.json").string());
    out << report.to_json().dump(2) << '\n';
  }
  write_generated(out_dir / "generated.jsonl", report.generated);
  std::ofstream trace(out_dir / "trace.csv", std::ios::binary | std::ios::trunc);
  if (!trace) throw RuntimeFailure("cannot write " + (out_dir / "trace.csv").string());
  trace << report.trace.to_csv();
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

std::unique_ptr<CausalLM> train_causal(std::span<const SequenceEncoding> seqs, const ExperimentConfig& cfg,
                                       std::uint64_t seed, std::span<const std::string> extra_texts,
                                       TrainStats* stats) {
  if (seqs.empty()) throw ValidationError("no training sequences");
  std::vector<std::string> corpus;
  corpus.reserve(seqs.size() + extra_texts.size());
  for (const auto& s : seqs) corpus.push_back(s.text);
  corpus.insert(corpus.end(), extra_texts.begin(), extra_texts.end());
  auto model = backend(cfg.backend).new_causal(corpus, backend_options(cfg, mix_seed(seed, kGeneratorInit)));
  TrainConfig tc = cfg.generator_train;
  tc.seed = mix_seed(seed, kGeneratorTrain);
  TrainStats s = finetune_causal(*model, seqs, tc);
  if (stats) *stats = std::move(s);
  return model;
}

void require_conversation(const SummaryRecord& r, const char* what) {
  if (!r.conversation) throw ValidationError(std::string(what) + ": record '" + r.id + "' has no conversation");
}

}  // namespace

std::unique_ptr<CausalLM> train_sl_generator(std::span<const SummaryRecord> records, const ExperimentConfig& cfg,
                                             std::uint64_t seed, std::span<const std::string> extra_texts,
                                             TrainStats* stats) {
  std::vector<SequenceEncoding> seqs;
  for (const auto& r : records) {
    require_conversation(r, "train_sl_generator");
    seqs.push_back(encode_sl(r.summary, r.conversation));
  }
  return train_causal(seqs, cfg, seed, extra_texts, stats);
}

std::unique_ptr<CausalLM> train_cn_generator(std::span<const SummaryRecord> records, const ExperimentConfig& cfg,
                                             std::uint64_t seed, std::span<const std::string> extra_texts,
                                             TrainStats* stats) {
  std::vector<SequenceEncoding> seqs;
  for (const auto& r : records) {
    require_conversation(r, "train_cn_generator");
    auto more = training_sequences_cn(r);
    seqs.insert(seqs.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return train_causal(seqs, cfg, seed, extra_texts, stats);
}

std::unique_ptr<Seq2SeqModel> train_summarizer(std::span<const SummaryPair> pairs, const ExperimentConfig& cfg,
                                               std::uint64_t seed, TrainStats* stats) {
  if (pairs.empty()) throw ValidationError("train_summarizer: no training pairs");
  std::vector<std::string> corpus;
  corpus.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    corpus.push_back(p.conversation_text);
    corpus.push_back(p.summary);
  }
  auto model = backend(cfg.summarizer_backend_name())
                   .new_seq2seq(corpus, backend_options(cfg, mix_seed(seed, kSummarizerInit)));
  TrainConfig tc = cfg.summarizer_train;
  tc.seed = mix_seed(seed, kSummarizerTrain);
  TrainStats s = finetune_seq2seq(*model, pairs, tc);
  if (stats) *stats = std::move(s);
  return model;
}

std::vector<SummaryPair> summary_pairs(std::span<const SummaryRecord> records) {
  std::vector<SummaryPair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    require_conversation(r, "summary_pairs");
    out.push_back(SummaryPair{linearize(*r.conversation), r.summary});
  }
  return out;
}

SummaryPair summary_pair(const GeneratedConversation& g) {
  // Malformed generations keep their raw text.
  return SummaryPair{g.well_formed ? linearize(g.conversation) : g.raw_text, g.summary};
}

MetricReport evaluate_summarizer(const Seq2SeqModel& summarizer, std::span<const SummaryRecord> test) {
  std::vector<std::string> predicted, refs;
  predicted.reserve(test.size());
  refs.reserve(test.size());
  for (const auto& r : test) {
    require_conversation(r, "evaluate_summarizer");
    predicted.push_back(summarize(summarizer, linearize(*r.conversation)));
    refs.push_back(r.summary);
  }
  return evaluate_summaries(predicted, refs);
}

std::string source_id(std::string_view generated_id) {
  const auto pos = generated_id.find("#gen");
  return std::string(pos == std::string_view::npos ? generated_id : generated_id.substr(0, pos));
}

std::vector<GeneratedConversation> generate_for_records(const CausalLM& generator, GenerationMode mode,
                                                        std::span<const SummaryRecord> records,
                                                        const ExperimentConfig& cfg, std::uint64_t seed,
                                                        int samples_per_summary) {
  if (samples_per_summary < 1) throw ValidationError("samples_per_summary must be >= 1");
  std::vector<GeneratedConversation> out;
  out.reserve(records.size() * static_cast<std::size_t>(samples_per_summary));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (int k = 0; k < samples_per_summary; ++k) {
      const std::uint64_t s =
          mix_seed(seed, i * static_cast<std::uint64_t>(samples_per_summary) + static_cast<std::uint64_t>(k));
      GenerationRequest req;
      req.id = records[i].id + "#gen" + (k > 0 ? "#" + std::to_string(k) : std::string());
      req.summary = records[i].summary;
      req.mode = mode;
      if (mode == GenerationMode::kCN) {
        const auto speakers = speakers_for_summary(req.summary);
        req.cn_controls = sample_inference_controls(cfg.cn_turns, speakers, mix_seed(s, 0));
        req.params = cfg.cn_sampling;
      } else {
        req.params = cfg.sampling;
      }
      req.params.seed = mix_seed(s, 1);
      out.push_back(generate(generator, req));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

void check_disjoint(std::span<const SummaryRecord> train, std::span<const SummaryRecord> test) {
  std::set<std::string> train_ids;
  for (const auto& r : train) train_ids.insert(r.id);
  std::vector<std::string> overlap;
  for (const auto& r : test) {
    if (train_ids.count(r.id)) overlap.push_back(r.id);
  }
  if (!overlap.empty()) {
    throw ValidationError("train and test splits share ids: " + join(overlap, ", "));
  }
}

SplitAudit audit_splits(std::span<const SummaryRecord> gen_train, std::span<const SummaryRecord> holdout,
                        std::span<const SummaryRecord> train, std::span<const SummaryRecord> test,
                        std::span<const GeneratedConversation> generated) {
  SplitAudit a;
  std::set<std::string> holdout_ids, gen_ids, train_ids;
  for (const auto& r : holdout) holdout_ids.insert(r.id);
  for (const auto& r : gen_train) gen_ids.insert(r.id);
  for (const auto& r : train) train_ids.insert(r.id);
  for (const auto& g : generated) {
    if (!holdout_ids.count(source_id(g.conversation.id()))) {
      a.problems.push_back("generated conversation outside holdout: " + g.conversation.id());
    }
  }
  for (const auto& id : holdout_ids) {
    if (gen_ids.count(id)) a.problems.push_back("holdout id used for generator training: " + id);
  }
  for (const auto& r : test) {
    if (train_ids.count(r.id) || gen_ids.count(r.id) || holdout_ids.count(r.id)) {
      a.problems.push_back("test id present in training data: " + r.id);
    }
  }
  a.passed = a.problems.empty();
  return a;
}

}  // namespace

ExperimentReport run_augmentation(std::span<const SummaryRecord> train, std::span<const SummaryRecord> test,
                                  const AugmentationPlan& plan, const RunOptions& options) {
  plan.validate();
  if (plan.method == AugmentMethod::kOversample) {
    ExperimentReport r =
        run_oversampling_baseline(train, test, plan.x_percent, plan.seed, plan.config, options);
    r.plan = plan.to_json();
    return r;
  }
  check_disjoint(train, test);
  const ExperimentConfig& cfg = plan.config;
  const std::uint64_t seed = plan.seed;

  ExperimentReport report;
  report.plan = plan.to_json();
  report.method = std::string(to_string(plan.method));
  report.original_size = static_cast<std::int64_t>(train.size());

  const AugmentationSplit split = split_for_augmentation(train, plan.x_percent, seed);
  report.gen_train_size = static_cast<std::int64_t>(split.gen_train.size());
  report.holdout_size = static_cast<std::int64_t>(split.holdout.size());

  std::vector<std::string> holdout_summaries;
  for (const auto& r : split.holdout) holdout_summaries.push_back(r.summary);

  auto save = [&](const auto& model, const char* name) {
    if (!options.checkpoint_dir) return;
    const fs::path dir = *options.checkpoint_dir / name;
    model.save(dir);
    report.artifacts[name] = report_path(dir, options);
  };

  std::unique_ptr<CausalLM> generator;
  GenerationMode mode = GenerationMode::kSL;
  if (plan.method == AugmentMethod::kCN) {
    generator = train_cn_generator(split.gen_train, cfg, seed, holdout_summaries);
    mode = GenerationMode::kCN;
  } else {
    generator = train_sl_generator(split.gen_train, cfg, seed, holdout_summaries);
  }
  save(*generator, "generator");

  if (plan.method == AugmentMethod::kRL) {
    const auto reward_summarizer =
        train_summarizer(summary_pairs(split.gen_train), cfg, mix_seed(seed, kRewardSummarizer));
    save(*reward_summarizer, "reward_summarizer");
    const auto reference = generator->clone();
    std::vector<std::string> prompts;
    for (const auto& r : split.gen_train) prompts.push_back(r.summary);
    PPOConfig ppo = cfg.ppo;
    ppo.seed = mix_seed(seed, kPolicyOptimization);
    CheckpointHook hook;
    if (options.checkpoint_dir && ppo.checkpoint_every > 0) {
      hook = [&](int step, const CausalLM& policy) {
        const fs::path dir = *options.checkpoint_dir / "policy" / ("step_" + std::to_string(step));
        policy.save(dir);
        report.artifacts["policy_checkpoints"].push_back(report_path(dir, options));
      };
    }
    report.trace = train_rl(*generator, *reference, *reward_summarizer, prompts, ppo, cfg.sampling, hook);
    report.incidents.skipped_ppo_steps = report.trace.skipped_steps;
    save(*generator, "policy");
    mode = GenerationMode::kRLPolicy;
  }

  report.generated = generate_for_records(*generator, mode, split.holdout, cfg, mix_seed(seed, kGeneration),
                                          plan.samples_per_summary);
  std::int64_t well_formed = 0;
  for (const auto& g : report.generated) {
    if (g.well_formed) {
      ++well_formed;
    } else {
      ++report.incidents.malformed_generations;
    }
    report.incidents.fallback_turns += g.fallback_turns;
  }
  if (well_formed == 0) {
    throw RuntimeFailure("generator produced no well-formed conversations for " +
                         std::to_string(report.generated.size()) + " holdout summaries; try more training epochs");
  }

  std::set<std::string> holdout_ids;
  for (const auto& r : split.holdout) holdout_ids.insert(r.id);
  std::vector<SummaryPair> augmented;
  for (const auto& r : train) {
    if (plan.replace_mode && holdout_ids.count(r.id)) continue;
    augmented.push_back(summary_pairs(std::span<const SummaryRecord>(&r, 1)).front());
  }
  for (const auto& g : report.generated) augmented.push_back(summary_pair(g));
  report.augmented_size = static_cast<std::int64_t>(augmented.size());

  const auto summarizer = train_summarizer(augmented, cfg, seed);
  save(*summarizer, "summarizer");
  report.summary_metrics = evaluate_summarizer(*summarizer, test);

  if (plan.with_baseline) {
    const auto base = train_summarizer(summary_pairs(train), cfg, seed);
    report.baseline_metrics = evaluate_summarizer(*base, test);
  }

  report.audit = audit_splits(split.gen_train, split.holdout, train, test, report.generated);
  if (options.artifact_root) {
    report.artifacts["generated"] = "generated.jsonl";
    report.artifacts["trace"] = "trace.csv";
  }
  return report;
}

ExperimentReport run_oversampling_baseline(std::span<const SummaryRecord> train,
                                           std::span<const SummaryRecord> test, double pct, std::uint64_t seed,
                                           const ExperimentConfig& cfg, const RunOptions& options) {
  if (!(pct > 0.0) || !std::isfinite(pct)) throw ValidationError("oversampling percentage must be > 0");
  if (train.empty()) throw ValidationError("oversampling: empty training split");
  check_disjoint(train, test);
  const auto n = train.size();
  const auto k = static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(n)));
  if (k == 0) throw ValidationError("oversampling: " + std::to_string(pct) + "% of " + std::to_string(n) +
                                    " records rounds to zero duplicates");

  ExperimentReport report;
  AugmentationPlan plan;
  plan.x_percent = pct;
  plan.method = AugmentMethod::kOversample;
  plan.seed = seed;
  plan.config = cfg;
  report.plan = plan.to_json();
  report.method = "oversample";
  report.original_size = static_cast<std::int64_t>(n);

  // Without replacement while the pool lasts.
  Rng rng(mix_seed(seed, kOversample));
  std::vector<std::size_t> order(n), picks;
  std::iota(order.begin(), order.end(), std::size_t{0});
  while (picks.size() < k) {
    rng.shuffle(order);
    for (std::size_t i = 0; i < n && picks.size() < k; ++i) picks.push_back(order[i]);
  }
  std::vector<SummaryPair> pairs = summary_pairs(train);
  for (std::size_t i : picks) pairs.push_back(pairs[i]);
  report.augmented_size = static_cast<std::int64_t>(pairs.size());

  const auto summarizer = train_summarizer(pairs, cfg, seed);
  if (options.checkpoint_dir) {
    const fs::path dir = *options.checkpoint_dir / "summarizer";
    summarizer->save(dir);
    report.artifacts["summarizer"] = report_path(dir, options);
  }
  report.summary_metrics = evaluate_summarizer(*summarizer, test);
  report.audit = audit_splits({}, {}, train, test, {});
  return report;
}

}  // namespace convforge
