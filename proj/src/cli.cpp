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

#include "convforge/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "convforge/corpus.hpp"
#include "convforge/errors.hpp"
#include "convforge/generators.hpp"
#include "convforge/harness.hpp"
#include "convforge/lmbridge.hpp"
#include "convforge/metrics.hpp"
#include "convforge/rlloop.hpp"
#include "json.hpp"

namespace convforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--backend", f.backend, "Model backend")->check(CLI::IsMember({"tiny", "pretrained"}));
  cmd->add_option("--config", f.config_path, "JSON config file");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed config " + path.string() + ": " + e.what());
  }
}

struct Resolved {
  ExperimentConfig cfg;
  json augment = json::object();
};

Resolved resolve(const CommonFlags& f) {
  json file = json::object();
  if (!f.config_path.empty()) file = read_json_file(f.config_path);
  if (!file.is_object()) throw ValidationError("config root must be an object");
  std::string backend_name = "tiny";
  if (file.contains("backend")) backend_name = file["backend"].get<std::string>();
  if (f.backend) backend_name = *f.backend;
  Resolved r;
  r.cfg = ExperimentConfig::for_backend(backend_name);
  r.cfg.merge(file);
  if (file.contains("augment")) r.augment = file["augment"];
  if (f.backend) r.cfg.backend = *f.backend;
  if (f.seed) r.cfg.seed = *f.seed;
  r.cfg.validate();
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

json stats_json(const TrainStats& s) {
  return json{{"epoch_loss", s.epoch_loss},
              {"skipped_sequences", s.skipped_sequences},
              {"optimizer_steps", s.optimizer_steps}};
}

std::vector<SummaryRecord> anonymized(const std::vector<SummaryRecord>& records) {
  std::vector<SummaryRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(anonymize(r).first);
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"convforge: conversation generation for summarization data augmentation", "convforge"};
  app.require_subcommand(1);

  // preprocess
  CommonFlags f_pre;
  std::string pre_in, pre_out, pre_split = "train", pre_names;
  auto* pre = app.add_subcommand("preprocess", "Load, anonymize speakers and write canonical JSONL");
  add_common(pre, f_pre);
  pre->add_option("--input", pre_in, "Raw JSONL (turns or Samsum dialogue form)")->required();
  pre->add_option("--output", pre_out, "Output JSONL")->required();
  pre->add_option("--split", pre_split, "train, validation or test");
  pre->add_option("--names", pre_names, "Write per-record name maps to this JSONL file");

  // synth
  CommonFlags f_syn;
  std::size_t syn_n = 200;
  std::string syn_out, syn_split = "train", syn_prefix = "syn";
  auto* syn = app.add_subcommand("synth", "Write a synthetic anonymized corpus");
  add_common(syn, f_syn);
  syn->add_option("--n", syn_n, "Number of records")->check(CLI::PositiveNumber);
  syn->add_option("--output", syn_out, "Output JSONL")->required();
  syn->add_option("--split", syn_split, "Split label");
  syn->add_option("--prefix", syn_prefix, "Id prefix");

  // stats
  CommonFlags f_stats;
  std::string stats_in;
  auto* stats = app.add_subcommand("stats", "Turn and token statistics of a dataset");
  add_common(stats, f_stats);
  stats->add_option("--input", stats_in, "Dataset JSONL")->required();

  // train-sl / train-cn
  CommonFlags f_tsl, f_tcn;
  std::string tsl_train, tsl_out, tcn_train, tcn_out;
  std::optional<int> tsl_epochs, tcn_epochs;
  auto* tsl = app.add_subcommand("train-sl", "Fine-tune a whole-conversation generator");
  add_common(tsl, f_tsl);
  tsl->add_option("--train", tsl_train, "Training JSONL")->required();
  tsl->add_option("--out", tsl_out, "Checkpoint directory")->required();
  tsl->add_option("--epochs", tsl_epochs, "Override training epochs");
  auto* tcn = app.add_subcommand("train-cn", "Fine-tune a controlled turn-by-turn generator");
  add_common(tcn, f_tcn);
  tcn->add_option("--train", tcn_train, "Training JSONL")->required();
  tcn->add_option("--out", tcn_out, "Checkpoint directory")->required();
  tcn->add_option("--epochs", tcn_epochs, "Override training epochs");

  // train-summarizer
  CommonFlags f_tsum;
  std::string tsum_train, tsum_out;
  std::vector<std::string> tsum_generated;
  std::optional<int> tsum_epochs;
  auto* tsum = app.add_subcommand("train-summarizer", "Fine-tune a summarizer");
  add_common(tsum, f_tsum);
  tsum->add_option("--train", tsum_train, "Training JSONL")->required();
  tsum->add_option("--generated", tsum_generated, "Generated JSONL files to add as extra pairs");
  tsum->add_option("--out", tsum_out, "Checkpoint directory")->required();
  tsum->add_option("--epochs", tsum_epochs, "Override training epochs");

  // train-rl
  CommonFlags f_trl;
  std::string trl_train, trl_policy, trl_summ, trl_out;
  std::optional<int> trl_steps;
  auto* trl = app.add_subcommand("train-rl", "PPO fine-tuning of a trained whole-conversation generator");
  add_common(trl, f_trl);
  trl->add_option("--train", trl_train, "JSONL whose summaries are the prompts")->required();
  trl->add_option("--policy", trl_policy, "Generator checkpoint (from train-sl)")->required();
  trl->add_option("--summarizer", trl_summ, "Reward summarizer checkpoint")->required();
  trl->add_option("--out", trl_out, "Output directory")->required();
  trl->add_option("--steps", trl_steps, "Override PPO steps");

  // generate
  CommonFlags f_gen;
  std::string gen_model, gen_in, gen_out, gen_mode = "sl";
  int gen_samples = 1;
  auto* gen = app.add_subcommand("generate", "Generate conversations from summaries");
  add_common(gen, f_gen);
  gen->add_option("--model", gen_model, "Generator checkpoint")->required();
  gen->add_option("--input", gen_in, "JSONL with summaries")->required();
  gen->add_option("--output", gen_out, "Generated JSONL")->required();
  gen->add_option("--mode", gen_mode, "sl, rl or cn")->check(CLI::IsMember({"sl", "rl", "cn"}));
  gen->add_option("--samples", gen_samples, "Conversations per summary")->check(CLI::PositiveNumber);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score generated conversations or summaries");
  eval->require_subcommand(1);
  CommonFlags f_ec, f_es;
  std::string ec_gen, ec_refs, ec_out, es_summ, es_test, es_out;
  auto* ec = eval->add_subcommand("conversations", "Compare generated conversations with references by id");
  add_common(ec, f_ec);
  ec->add_option("--generated", ec_gen, "Generated JSONL")->required();
  ec->add_option("--references", ec_refs, "Reference dataset JSONL")->required();
  ec->add_option("--out", ec_out, "Write the report JSON here");
  auto* es = eval->add_subcommand("summaries", "Summarize a test split and score against its summaries");
  add_common(es, f_es);
  es->add_option("--summarizer", es_summ, "Summarizer checkpoint")->required();
  es->add_option("--test", es_test, "Test dataset JSONL")->required();
  es->add_option("--out", es_out, "Write the report JSON here");

  // augment
  CommonFlags f_aug;
  std::string aug_train, aug_test, aug_out, aug_method;
  std::optional<double> aug_x;
  std::optional<int> aug_samples;
  bool aug_baseline = false, aug_replace = false;
  auto* aug = app.add_subcommand("augment", "Full augmentation experiment");
  add_common(aug, f_aug);
  aug->add_option("--train", aug_train, "Training JSONL")->required();
  aug->add_option("--test", aug_test, "Test JSONL")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--method", aug_method, "sl, rl, cn or oversample")
      ->check(CLI::IsMember({"sl", "rl", "cn", "oversample"}));
  aug->add_option("--x", aug_x, "Generator-training percentage (oversampling percentage for oversample)");
  aug->add_flag("--baseline", aug_baseline, "Also train on the unaugmented set");
  aug->add_flag("--replace", aug_replace, "Replace holdout pairs instead of adding to them");
  aug->add_option("--samples-per-summary", aug_samples, "Generated conversations per holdout summary");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*pre) {
      Resolved r = resolve(f_pre);
      (void)r;
      const auto records = load_dataset(pre_in, parse_split(pre_split));
      std::vector<SummaryRecord> outs;
      std::ostringstream names;
      for (const auto& rec : records) {
        auto [anon, map] = anonymize(rec);
        json m = json::object();
        for (const auto& [name, id] : map) m[name] = id;
        names << json{{"id", rec.id}, {"names", m}}.dump() << '\n';
        outs.push_back(std::move(anon));
      }
      write_dataset(pre_out, outs);
      if (!pre_names.empty()) write_text(pre_names, names.str());
      out << "wrote " << outs.size() << " records to " << pre_out << '\n';
    } else if (*syn) {
      Resolved r = resolve(f_syn);
      const auto records = make_synthetic_corpus(syn_n, r.cfg.seed, parse_split(syn_split), syn_prefix);
      write_dataset(syn_out, records);
      out << "wrote " << records.size() << " records to " << syn_out << '\n';
    } else if (*stats) {
      (void)resolve(f_stats);
      const auto records = load_dataset(stats_in, Split::kTest);
      std::vector<Conversation> convs;
      for (const auto& rec : records) {
        if (rec.conversation) convs.push_back(*rec.conversation);
      }
      const CorpusStats s = compute_stats(convs);
      out << std::fixed << std::setprecision(2) << "conversations: " << s.n_conversations << '\n'
          << "avg_turns: " << s.avg_turns << " +- " << s.std_turns << '\n'
          << "avg_tokens_per_turn: " << s.avg_tokens_per_turn << " +- " << s.std_tokens_per_turn << '\n';
    } else if (*tsl || *tcn) {
      const bool cn = tcn->parsed();
      Resolved r = resolve(cn ? f_tcn : f_tsl);
      if (auto e = cn ? tcn_epochs : tsl_epochs) r.cfg.generator_train.epochs = *e;
      r.cfg.validate();
      const auto records = anonymized(load_dataset(cn ? tcn_train : tsl_train, Split::kTrain));
      TrainStats ts;
      auto model = cn ? train_cn_generator(records, r.cfg, r.cfg.seed, {}, &ts)
                      : train_sl_generator(records, r.cfg, r.cfg.seed, {}, &ts);
      const fs::path dir = cn ? tcn_out : tsl_out;
      model->save(dir);
      write_text(dir / "train_stats.json", json{{"stats", stats_json(ts)}, {"config", r.cfg.to_json()}}.dump(2) + "\n");
      out << stats_json(ts).dump() << '\n';
    } else if (*tsum) {
      Resolved r = resolve(f_tsum);
      if (tsum_epochs) r.cfg.summarizer_train.epochs = *tsum_epochs;
      r.cfg.validate();
      const auto records = anonymized(load_dataset(tsum_train, Split::kTrain));
      std::vector<SummaryPair> pairs = summary_pairs(records);
      for (const auto& g : tsum_generated) {
        for (const auto& item : load_generated(g)) pairs.push_back(summary_pair(item));
      }
      TrainStats ts;
      auto model = train_summarizer(pairs, r.cfg, r.cfg.seed, &ts);
      model->save(tsum_out);
      write_text(fs::path(tsum_out) / "train_stats.json",
                 json{{"stats", stats_json(ts)}, {"config", r.cfg.to_json()}}.dump(2) + "\n");
      out << stats_json(ts).dump() << '\n';
    } else if (*trl) {
      Resolved r = resolve(f_trl);
      if (trl_steps) r.cfg.ppo.steps = *trl_steps;
      r.cfg.ppo.seed = r.cfg.seed;
      r.cfg.validate();
      const auto records = anonymized(load_dataset(trl_train, Split::kTrain));
      std::vector<std::string> prompts;
      for (const auto& rec : records) prompts.push_back(rec.summary);
      auto policy = load_causal(trl_policy);
      const auto reference = policy->clone();
      const auto summarizer = load_seq2seq(trl_summ);
      const fs::path dir = trl_out;
      CheckpointHook hook = [&](int step, const CausalLM& p) { p.save(dir / "checkpoints" / ("step_" + std::to_string(step))); };
      const PPOTrace trace = train_rl(*policy, *reference, *summarizer, prompts, r.cfg.ppo, r.cfg.sampling, hook);
      policy->save(dir);
      write_text(dir / "trace.csv", trace.to_csv());
      out << "ran " << trace.rows.size() << " PPO steps (" << trace.skipped_steps << " skipped)\n";
    } else if (*gen) {
      Resolved r = resolve(f_gen);
      const auto records = load_dataset(gen_in, Split::kTrain);
      const auto model = load_causal(gen_model);
      const auto items =
          generate_for_records(*model, parse_generation_mode(gen_mode), records, r.cfg, r.cfg.seed, gen_samples);
      write_generated(gen_out, items);
      std::size_t ok = 0;
      for (const auto& g : items) ok += g.well_formed ? 1 : 0;
      out << "generated " << items.size() << " conversations (" << ok << " well-formed)\n";
    } else if (*ec) {
      (void)resolve(f_ec);
      auto items = load_generated(ec_gen);
      for (auto& g : items) g.conversation.set_id(source_id(g.conversation.id()));
      const auto refs_records = load_dataset(ec_refs, Split::kTest);
      std::vector<Conversation> refs;
      for (const auto& rec : refs_records) {
        if (!rec.conversation) throw ValidationError("reference record '" + rec.id + "' has no conversation");
        Conversation c = *rec.conversation;
        c.set_id(rec.id);
        refs.push_back(std::move(c));
      }
      const MetricReport rep = evaluate_conversations(items, refs);
      out << render_metric_table(rep);
      if (!ec_out.empty()) write_text(ec_out, to_json(rep).dump(2) + "\n");
    } else if (*es) {
      (void)resolve(f_es);
      const auto model = load_seq2seq(es_summ);
      const auto test = load_dataset(es_test, Split::kTest);
      const MetricReport rep = evaluate_summarizer(*model, test);
      out << render_metric_table(rep);
      if (!es_out.empty()) write_text(es_out, to_json(rep).dump(2) + "\n");
    } else if (*aug) {
      Resolved r = resolve(f_aug);
      AugmentationPlan plan;
      const json& a = r.augment;
      if (!a.is_object()) throw ValidationError("config section 'augment' must be an object");
      for (const auto& [k, v] : a.items()) {
        if (k != "x_percent" && k != "method" && k != "replace_mode" && k != "samples_per_summary" &&
            k != "with_baseline") {
          throw ValidationError("unknown key '" + k + "' in config section 'augment'");
        }
      }
      plan.x_percent = a.value("x_percent", plan.x_percent);
      plan.method = parse_augment_method(a.value("method", std::string(to_string(plan.method))));
      plan.replace_mode = a.value("replace_mode", plan.replace_mode);
      plan.samples_per_summary = a.value("samples_per_summary", plan.samples_per_summary);
      plan.with_baseline = a.value("with_baseline", plan.with_baseline);
      if (aug_x) plan.x_percent = *aug_x;
      if (!aug_method.empty()) plan.method = parse_augment_method(aug_method);
      if (aug_baseline) plan.with_baseline = true;
      if (aug_replace) plan.replace_mode = true;
      if (aug_samples) plan.samples_per_summary = *aug_samples;
      plan.seed = r.cfg.seed;
      plan.config = r.cfg;
      plan.validate();

      const auto train = anonymized(load_dataset(aug_train, Split::kTrain));
      const auto test = anonymized(load_dataset(aug_test, Split::kTest));
      const fs::path out_dir = aug_out;
      RunOptions opts;
      opts.artifact_root = out_dir;
      if (const char* cache = std::getenv("CONVFORGE_CACHE"); cache && *cache) {
        std::ostringstream name;
        name << "augment-" << to_string(plan.method) << "-x" << plan.x_percent << "-seed" << plan.seed;
        opts.checkpoint_dir = fs::path(cache) / name.str();
      } else {
        opts.checkpoint_dir = out_dir / "checkpoints";
      }
      const ExperimentReport rep = run_augmentation(train, test, plan, opts);
      write_report_files(rep, out_dir);
      out << "method " << rep.method << ": " << rep.original_size << " original, " << rep.augmented_size
          << " training pairs; audit " << (rep.audit.passed ? "passed" : "FAILED") << '\n';
      out << render_metric_table(rep.summary_metrics);
      if (!rep.audit.passed) return 1;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace convforge
