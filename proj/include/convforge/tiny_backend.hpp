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

// The `tiny` backend: small randomly initialized models that train in
// seconds on a CPU. Used by the test suites and for pipeline smoke runs.
//
// Both the causal LM and the summarizer are built on WindowNet, a neural
// n-gram model. The next-token distribution at position t is computed from
//
//   x_t = [e(w_{t-1}); e(w_{t-2}); e(w_{t-3}); mean e(conditioning tokens < t);
//          mean e(prefix tokens < t)]
//   h_t = tanh(W1 x_t + b1),  logits_t = W2 h_t + b2,  value_t = v . h_t + c
//
// For the causal LM the conditioning tokens are the summary span; for the
// summarizer they are the source conversation.

#ifndef CONVFORGE_TINY_BACKEND_HPP_
#define CONVFORGE_TINY_BACKEND_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convforge/lmbridge.hpp"

namespace convforge::tiny {

struct TinyOptions {
  int embed_dim = 32;
  int hidden_dim = 128;
  int vocab_limit = 8000;
  int max_speakers = 16;
  std::uint64_t seed = 0;

  static TinyOptions from(const BackendOptions& options);
  nlohmann::json to_json() const;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;  // first structural token

  // Special tokens, speaker tags, control values, then corpus words by
  // descending frequency (ties broken lexicographically).
  static Vocabulary build(std::span<const std::string> corpus, const TinyOptions& options);
  static Vocabulary load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  int id(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// A token sequence plus which positions feed the conditioning mean.
struct NetSequence {
  std::vector<int> tokens;
  std::vector<char> cond;
  std::size_t prefix_start = 0;
};

class WindowNet {
 public:
  static constexpr int kWindow = 3;

  WindowNet() = default;
  WindowNet(int vocab, int embed, int hidden, std::uint64_t seed);

  struct Forward {
    std::vector<std::size_t> positions;  // predicted positions t
    Eigen::MatrixXd x;                   // (5D) x N inputs
    Eigen::MatrixXd h;                   // H x N hidden activations
    Eigen::MatrixXd logprobs;            // V x N log-softmax
    Eigen::VectorXd values;              // N
  };

  // Positions may include tokens.size() (the next, not yet generated token).
  Forward forward(const NetSequence& seq, std::span<const std::size_t> positions) const;

  // Accumulates parameter gradients given dL/dlogits (V x N) and dL/dvalue (N).
  void backward(const NetSequence& seq, const Forward& fw, const Eigen::MatrixXd& d_logits,
                const Eigen::VectorXd& d_values);

  void zero_grad() { grad_.setZero(); }
  void reset_optimizer();
  double grad_norm() const { return grad_.norm(); }
  // Global-norm clip then Adam (beta1 0.9, beta2 0.999, no weight decay).
  double adam_step(double lr, double max_grad_norm, double eps);

  int vocab() const { return vocab_; }
  int embed() const { return embed_; }
  int hidden() const { return hidden_; }
  std::size_t num_params() const { return static_cast<std::size_t>(theta_.size()); }

  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::VectorXd& mutable_params() { return theta_; }
  const Eigen::VectorXd& grad() const { return grad_; }

  void save(const std::filesystem::path& file) const;
  static WindowNet load(const std::filesystem::path& file);

 private:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  struct Layout {
    Eigen::Index emb, w1, b1, w2, b2, wv, bv, total;
  };
  Layout layout() const;
  int input_dim() const { return (kWindow + 2) * embed_; }

  int vocab_ = 0;
  int embed_ = 0;
  int hidden_ = 0;
  Eigen::VectorXd theta_;
  Eigen::VectorXd grad_;
  Eigen::VectorXd adam_m_;
  Eigen::VectorXd adam_v_;
  std::int64_t adam_t_ = 0;
};

// Learning-rate multiplier: linear warmup to 1 over `warmup` steps, then
// linear decay to 0 at `total`.
double linear_schedule(std::int64_t step, std::int64_t warmup, std::int64_t total);

class TinyCausalLM final : public CausalLM {
 public:
  TinyCausalLM(Vocabulary vocab, const TinyOptions& options);

  std::string backend_name() const override { return "tiny"; }
  std::vector<int> token_ids(const SequenceEncoding& seq) const override;
  std::string decode_ids(std::span<const int> ids) const override;
  std::optional<int> token_id(std::string_view surface) const override { return vocab_.find(surface); }
  std::size_t vocab_size() const override { return vocab_.size(); }
  std::vector<int> speaker_tag_ids() const override;

  TrainStats finetune(std::span<const SequenceEncoding> sequences, const TrainConfig& cfg) override;
  std::vector<double> next_token_logprobs(std::span<const int> context) const override;
  PolicyScores score(std::span<const int> prompt, std::span<const int> response) const override;
  void accumulate_gradient(std::span<const int> prompt, std::span<const int> response,
                           std::span<const double> d_logprobs, std::span<const double> d_values) override;
  void zero_grad() override { net_.zero_grad(); }
  void reset_optimizer() override { net_.reset_optimizer(); }
  double apply_gradients(double learning_rate, double max_grad_norm, double adam_epsilon) override;

  std::unique_ptr<CausalLM> clone() const override { return std::make_unique<TinyCausalLM>(*this); }
  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<TinyCausalLM> load(const std::filesystem::path& dir);

  const Vocabulary& vocab() const { return vocab_; }
  const WindowNet& net() const { return net_; }
  WindowNet& mutable_net() { return net_; }

  // Conditioning flags: tokens between <bos> and the first <dialog>/<context>.
  NetSequence make_sequence(std::vector<int> ids) const;

 private:
  Vocabulary vocab_;
  TinyOptions options_;
  WindowNet net_;
  std::vector<int> never_sample_;
};

class TinySeq2Seq final : public Seq2SeqModel {
 public:
  TinySeq2Seq(Vocabulary vocab, const TinyOptions& options);

  std::string backend_name() const override { return "tiny"; }
  TrainStats finetune(std::span<const SummaryPair> pairs, const TrainConfig& cfg) override;
  std::string summarize(std::string_view conversation_text) const override;
  std::unique_ptr<Seq2SeqModel> clone() const override { return std::make_unique<TinySeq2Seq>(*this); }
  void save(const std::filesystem::path& dir) const override;
  static std::unique_ptr<TinySeq2Seq> load(const std::filesystem::path& dir);

  const WindowNet& net() const { return net_; }

 private:
  NetSequence source_sequence(std::string_view conversation_text) const;

  Vocabulary vocab_;
  TinyOptions options_;
  WindowNet net_;
};

BackendFactory make_factory();

}  // namespace convforge::tiny

#endif  // CONVFORGE_TINY_BACKEND_HPP_
