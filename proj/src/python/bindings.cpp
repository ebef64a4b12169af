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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "convforge/cli.hpp"
#include "convforge/corpus.hpp"
#include "convforge/errors.hpp"
#include "convforge/generators.hpp"
#include "convforge/harness.hpp"
#include "convforge/lmbridge.hpp"
#include "convforge/metrics.hpp"
#include "convforge/rlloop.hpp"
#include "convforge/seqformat.hpp"
#include "json.hpp"

namespace py = pybind11;
using json = nlohmann::json;

namespace convforge {
namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object record_to_py(const SummaryRecord& r) { return to_py(json::parse(format_record(r))); }

SummaryRecord record_from_py(const py::handle& o, Split split) {
  auto recs = parse_dataset(from_py(o).dump(), split);
  return std::move(recs.at(0));
}

Conversation conversation_from_py(const py::handle& turns) {
  std::vector<Turn> out;
  for (const auto& t : turns) {
    if (py::isinstance<py::dict>(t)) {
      out.push_back({t["speaker"].cast<std::string>(), t["text"].cast<std::string>()});
    } else {
      auto pair = t.cast<std::pair<std::string, std::string>>();
      out.push_back({pair.first, pair.second});
    }
  }
  return Conversation("", std::move(out));
}

py::list turns_to_py(const Conversation& c) {
  py::list out;
  for (const auto& t : c.turns()) {
    py::dict d;
    d["speaker"] = t.speaker;
    d["text"] = t.text;
    out.append(d);
  }
  return out;
}

TrainStats stats_from_py(const py::handle& o) {
  TrainStats s;
  if (o.is_none()) return s;
  const json j = from_py(o);
  if (j.contains("epoch_loss")) s.epoch_loss = j["epoch_loss"].get<std::vector<double>>();
  if (j.contains("skipped_sequences")) s.skipped_sequences = j["skipped_sequences"].get<std::int64_t>();
  if (j.contains("optimizer_steps")) s.optimizer_steps = j["optimizer_steps"].get<std::int64_t>();
  return s;
}

// Causal model implemented by a Python object.
class PyCausalLM final : public CausalLM {
 public:
  explicit PyCausalLM(py::object impl) : impl_(std::move(impl)) {}
  ~PyCausalLM() override {
    py::gil_scoped_acquire gil;
    impl_ = py::object();
  }

  std::string backend_name() const override { return call("backend_name").cast<std::string>(); }
  int max_length() const override {
    if (!py::hasattr(impl_, "max_length")) return kCausalMaxLength;
    return call("max_length").cast<int>();
  }
  std::vector<int> token_ids(const SequenceEncoding& seq) const override {
    return call("encode", seq.text, seq.tokens).cast<std::vector<int>>();
  }
  std::string decode_ids(std::span<const int> ids) const override {
    return call("decode", std::vector<int>(ids.begin(), ids.end())).cast<std::string>();
  }
  std::optional<int> token_id(std::string_view surface) const override {
    return call("token_id", std::string(surface)).cast<std::optional<int>>();
  }
  std::size_t vocab_size() const override { return call("vocab_size").cast<std::size_t>(); }

  TrainStats finetune(std::span<const SequenceEncoding> sequences, const TrainConfig& cfg) override {
    std::vector<std::string> texts;
    for (const auto& s : sequences) texts.push_back(s.text);
    return stats_from_py(call("finetune", texts, to_py(to_json(cfg))));
  }
  std::vector<double> next_token_logprobs(std::span<const int> context) const override {
    return call("next_token_logprobs", std::vector<int>(context.begin(), context.end())).cast<std::vector<double>>();
  }
  PolicyScores score(std::span<const int> prompt, std::span<const int> response) const override {
    auto res = call("score", std::vector<int>(prompt.begin(), prompt.end()),
                    std::vector<int>(response.begin(), response.end()))
                   .cast<std::pair<std::vector<double>, std::vector<double>>>();
    return PolicyScores{std::move(res.first), std::move(res.second)};
  }
  void accumulate_gradient(std::span<const int> prompt, std::span<const int> response,
                           std::span<const double> d_logprobs, std::span<const double> d_values) override {
    call("accumulate_gradient", std::vector<int>(prompt.begin(), prompt.end()),
         std::vector<int>(response.begin(), response.end()),
         std::vector<double>(d_logprobs.begin(), d_logprobs.end()),
         std::vector<double>(d_values.begin(), d_values.end()));
  }
  void zero_grad() override { call("zero_grad"); }
  void reset_optimizer() override { call("reset_optimizer"); }
  double apply_gradients(double lr, double max_grad_norm, double eps) override {
    return call("apply_gradients", lr, max_grad_norm, eps).cast<double>();
  }
  std::unique_ptr<CausalLM> clone() const override { return std::make_unique<PyCausalLM>(call("clone")); }
  void save(const std::filesystem::path& dir) const override { call("save", dir.string()); }

 private:
  template <class... Args>
  py::object call(const char* name, Args&&... args) const {
    py::gil_scoped_acquire gil;
    return impl_.attr(name)(std::forward<Args>(args)...);
  }

  py::object impl_;
};

class PySeq2Seq final : public Seq2SeqModel {
 public:
  explicit PySeq2Seq(py::object impl) : impl_(std::move(impl)) {}
  ~PySeq2Seq() override {
    py::gil_scoped_acquire gil;
    impl_ = py::object();
  }

  std::string backend_name() const override { return call("backend_name").cast<std::string>(); }
  TrainStats finetune(std::span<const SummaryPair> pairs, const TrainConfig& cfg) override {
    std::vector<std::pair<std::string, std::string>> p;
    for (const auto& x : pairs) p.emplace_back(x.conversation_text, x.summary);
    return stats_from_py(call("finetune", p, to_py(to_json(cfg))));
  }
  std::string summarize(std::string_view text) const override {
    return call("summarize", std::string(text)).cast<std::string>();
  }
  std::unique_ptr<Seq2SeqModel> clone() const override { return std::make_unique<PySeq2Seq>(call("clone")); }
  void save(const std::filesystem::path& dir) const override { call("save", dir.string()); }

 private:
  template <class... Args>
  py::object call(const char* name, Args&&... args) const {
    py::gil_scoped_acquire gil;
    return impl_.attr(name)(std::forward<Args>(args)...);
  }

  py::object impl_;
};

// Registered factories outlive the interpreter; they are never freed.
std::shared_ptr<py::object> pinned(py::object o) {
  return std::shared_ptr<py::object>(new py::object(std::move(o)), [](py::object*) {});
}

void register_python_backend(const std::string& name, py::object new_causal, py::object new_seq2seq,
                             py::object load_causal_fn, py::object load_seq2seq_fn) {
  BackendFactory f;
  auto options = [](const BackendOptions& o) {
    json j = o.extra;
    j["seed"] = o.seed;
    return to_py(j);
  };
  if (!new_causal.is_none()) {
    auto fn = pinned(new_causal);
    f.new_causal = [fn, options](std::span<const std::string> corpus, const BackendOptions& o) {
      py::gil_scoped_acquire gil;
      std::unique_ptr<CausalLM> m =
          std::make_unique<PyCausalLM>((*fn)(std::vector<std::string>(corpus.begin(), corpus.end()), options(o)));
      return m;
    };
  }
  if (!new_seq2seq.is_none()) {
    auto fn = pinned(new_seq2seq);
    f.new_seq2seq = [fn, options](std::span<const std::string> corpus, const BackendOptions& o) {
      py::gil_scoped_acquire gil;
      std::unique_ptr<Seq2SeqModel> m =
          std::make_unique<PySeq2Seq>((*fn)(std::vector<std::string>(corpus.begin(), corpus.end()), options(o)));
      return m;
    };
  }
  if (!load_causal_fn.is_none()) {
    auto fn = pinned(load_causal_fn);
    f.load_causal = [fn](const std::filesystem::path& dir) {
      py::gil_scoped_acquire gil;
      std::unique_ptr<CausalLM> m = std::make_unique<PyCausalLM>((*fn)(dir.string()));
      return m;
    };
  }
  if (!load_seq2seq_fn.is_none()) {
    auto fn = pinned(load_seq2seq_fn);
    f.load_seq2seq = [fn](const std::filesystem::path& dir) {
      py::gil_scoped_acquire gil;
      std::unique_ptr<Seq2SeqModel> m = std::make_unique<PySeq2Seq>((*fn)(dir.string()));
      return m;
    };
  }
  register_backend(name, std::move(f));
}

py::object metric_report_to_py(const MetricReport& r) { return to_py(to_json(r)); }

}  // namespace
}  // namespace convforge

PYBIND11_MODULE(_core, m) {
  using namespace convforge;
  m.doc() = "convforge core bindings";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command line; returns (exit_code, stdout, stderr).");

  // metrics
  m.def("rouge_n_f1", py::overload_cast<std::string_view, std::string_view, int>(&rouge_n_f1), py::arg("candidate"),
        py::arg("reference"), py::arg("n"));
  m.def("rouge_l_f1", py::overload_cast<std::string_view, std::string_view>(&rouge_l_f1), py::arg("candidate"),
        py::arg("reference"));
  m.def(
      "bleu4",
      [](const std::string& candidate, const std::vector<std::string>& references) {
        return bleu4(candidate, references);
      },
      py::arg("candidate"), py::arg("references"));
  m.def(
      "corpus_bleu4",
      [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return corpus_bleu4(c, r); },
      py::arg("candidates"), py::arg("references"));
  m.def(
      "meteor", [](const std::string& c, const std::string& r) { return meteor(c, r); }, py::arg("candidate"),
      py::arg("reference"));
  m.def("porter_stem", &porter_stem, py::arg("word"));
  m.def(
      "evaluate_summaries",
      [](const std::vector<std::string>& g, const std::vector<std::string>& r) {
        return metric_report_to_py(evaluate_summaries(g, r));
      },
      py::arg("generated"), py::arg("references"));

  // corpus
  m.def(
      "load_dataset",
      [](const std::string& path, const std::string& split) {
        py::list out;
        for (const auto& r : load_dataset(path, parse_split(split))) out.append(record_to_py(r));
        return out;
      },
      py::arg("path"), py::arg("split") = "train");
  m.def(
      "anonymize",
      [](const py::dict& record) {
        auto [anon, names] = anonymize(record_from_py(record, Split::kTrain));
        py::dict mapping;
        for (const auto& [name, id] : names) mapping[py::str(name)] = id;
        return py::make_tuple(record_to_py(anon), mapping);
      },
      py::arg("record"));
  m.def(
      "compute_stats",
      [](const py::list& conversations) {
        std::vector<Conversation> convs;
        for (const auto& c : conversations) convs.push_back(conversation_from_py(c));
        return to_py(to_json(compute_stats(convs)));
      },
      py::arg("conversations"), "Each conversation is a list of {speaker, text} dicts or (speaker, text) pairs.");
  m.def(
      "make_synthetic_corpus",
      [](std::size_t n, std::uint64_t seed) {
        py::list out;
        for (const auto& r : make_synthetic_corpus(n, seed)) out.append(record_to_py(r));
        return out;
      },
      py::arg("n"), py::arg("seed") = 0);

  // sequence format
  m.def(
      "linearize", [](const py::list& turns) { return linearize(conversation_from_py(turns)); }, py::arg("turns"));
  m.def(
      "decode_conversation",
      [](const std::string& text) {
        const auto d = decode_conversation(text);
        return py::make_tuple(turns_to_py(d.conversation), d.well_formed);
      },
      py::arg("text"));
  m.def(
      "encode_sl",
      [](const std::string& summary, const std::optional<py::list>& turns) {
        std::optional<Conversation> c;
        if (turns) c = conversation_from_py(*turns);
        return encode_sl(summary, c).text;
      },
      py::arg("summary"), py::arg("turns") = py::none());
  m.def(
      "encode_cn",
      [](const std::string& summary, const py::list& context, int turns_to_go, const std::string& speaker,
         const std::string& length, const std::optional<std::string>& utterance) {
        auto b = parse_bucket(length);
        if (!b) throw ValidationError("unknown length bucket: " + length);
        return encode_cn(summary, conversation_from_py(context).turns(), ControlState{turns_to_go, speaker, *b},
                         utterance)
            .text;
      },
      py::arg("summary"), py::arg("context"), py::arg("turns_to_go"), py::arg("speaker"), py::arg("length"),
      py::arg("utterance") = py::none());
  m.def(
      "parse_controls",
      [](const std::string& text) -> py::object {
        auto c = parse_controls(text);
        if (!c) return py::none();
        return to_py(to_json(*c));
      },
      py::arg("text"));
  m.def(
      "bucket_length", [](const std::string& u) { return std::string(to_string(bucket_length(u))); },
      py::arg("utterance"));
  m.def("surface_tokens", &surface_tokens, py::arg("text"));

  // generation controls
  m.def(
      "sample_inference_controls",
      [](int min_turns, int max_turns, const std::vector<std::string>& speakers, std::uint64_t seed) {
        py::list out;
        for (const auto& c : sample_inference_controls({min_turns, max_turns}, speakers, seed)) out.append(to_py(to_json(c)));
        return out;
      },
      py::arg("min_turns"), py::arg("max_turns"), py::arg("speakers"), py::arg("seed"));

  // policy optimization pieces
  m.def(
      "compute_gae",
      [](const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lam) {
        auto e = compute_gae(rewards, values, gamma, lam);
        return py::make_tuple(e.advantages, e.returns);
      },
      py::arg("rewards"), py::arg("values"), py::arg("gamma"), py::arg("lam"));
  m.def("clipped_surrogate", &clipped_surrogate, py::arg("ratio"), py::arg("advantage"), py::arg("eps"));
  m.def(
      "whiten", [](const std::vector<double>& xs) { return whiten(xs); }, py::arg("xs"));

  // configuration and backends
  m.def(
      "default_config",
      [](const std::string& backend) { return to_py(ExperimentConfig::for_backend(backend).to_json()); },
      py::arg("backend") = "tiny");
  m.def("backend_names", &backend_names);
  m.def("register_backend", &register_python_backend, py::arg("name"), py::arg("new_causal") = py::none(),
        py::arg("new_seq2seq") = py::none(), py::arg("load_causal") = py::none(),
        py::arg("load_seq2seq") = py::none(),
        "Register a model backend implemented in Python. Each callable returns an object with the model "
        "protocol methods; see convforge.pretrained for an example.");
}
