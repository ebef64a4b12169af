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

#include "convforge/tiny_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "convforge/errors.hpp"
#include "convforge/rng.hpp"
#include "convforge/text.hpp"

namespace convforge::tiny {

using json = nlohmann::json;

namespace {

constexpr std::uint32_t kWeightsMagic = 0x4e574643;  // "CFWN"
constexpr std::int32_t kWeightsVersion = 1;
constexpr int kFormatVersion = 1;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

json special_token_list(int max_speakers) {
  json out = json::array();
  for (SpecialToken t : kAllSpecialTokens) out.push_back(std::string(surface(t)));
  for (int k = 0; k < max_speakers; ++k) out.push_back(speaker_tag(k));
  return out;
}

json read_config(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw ValidationError("missing config.json in " + dir.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("unreadable config.json in " + dir.string() + ": " + e.what());
  }
}

void write_config(const std::filesystem::path& dir, const json& cfg) {
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + (dir / "config.json").string());
  out << cfg.dump(2) << '\n';
}

}  // namespace

TinyOptions TinyOptions::from(const BackendOptions& options) {
  TinyOptions o;
  o.seed = options.seed;
  const json& x = options.extra;
  if (x.is_object()) {
    o.embed_dim = x.value("embed_dim", o.embed_dim);
    o.hidden_dim = x.value("hidden_dim", o.hidden_dim);
    o.vocab_limit = x.value("vocab_limit", o.vocab_limit);
    o.max_speakers = x.value("max_speakers", o.max_speakers);
  }
  if (o.embed_dim < 1 || o.hidden_dim < 1 || o.vocab_limit < 0 || o.max_speakers < 1) {
    throw ValidationError("tiny backend: dimensions must be positive");
  }
  return o;
}

json TinyOptions::to_json() const {
  return json{{"embed_dim", embed_dim},
              {"hidden_dim", hidden_dim},
              {"vocab_limit", vocab_limit},
              {"max_speakers", max_speakers},
              {"seed", seed}};
}

// ---------------------------------------------------------------------------
// Vocabulary

void Vocabulary::add(std::string token) {
  if (index_.count(token) != 0) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, const TinyOptions& options) {
  Vocabulary v;
  v.add("<pad>");
  v.add("<unk>");
  static_assert(kAllSpecialTokens[0] == SpecialToken::kBos);
  for (SpecialToken t : kAllSpecialTokens) v.add(std::string(surface(t)));
  for (int k = 0; k < options.max_speakers; ++k) v.add(speaker_tag(k));
  for (LengthBucket b : kAllBuckets) v.add(std::string(to_string(b)));
  for (int n = 1; n <= kMaxTurnsToGo; ++n) v.add(std::to_string(n));

  std::map<std::string, std::int64_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : surface_tokens(text)) {
      if (v.index_.count(tok) != 0) continue;
      ++counts[std::move(tok)];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto limit = static_cast<std::size_t>(options.vocab_limit);
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) v.add(ranked[i].first);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open vocabulary: " + file.string());
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.add(line);
  }
  if (v.size() < 2 || v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>") {
    throw ValidationError("vocabulary file does not start with <pad>, <unk>: " + file.string());
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write vocabulary: " + file.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// WindowNet

WindowNet::Layout WindowNet::layout() const {
  Layout l{};
  const Eigen::Index v = vocab_, d = embed_, h = hidden_, in = input_dim();
  l.emb = 0;
  l.w1 = l.emb + d * v;
  l.b1 = l.w1 + h * in;
  l.w2 = l.b1 + h;
  l.b2 = l.w2 + v * h;
  l.wv = l.b2 + v;
  l.bv = l.wv + h;
  l.total = l.bv + 1;
  return l;
}

WindowNet::WindowNet(int vocab, int embed, int hidden, std::uint64_t seed)
    : vocab_(vocab), embed_(embed), hidden_(hidden) {
  const Layout l = layout();
  theta_ = Eigen::VectorXd::Zero(l.total);
  Rng rng(seed);
  const double w1_std = 1.0 / std::sqrt(static_cast<double>(input_dim()));
  const double w2_std = 0.5 / std::sqrt(static_cast<double>(hidden_));
  for (Eigen::Index i = l.emb; i < l.w1; ++i) theta_[i] = rng.normal(0.0, 0.1);
  for (Eigen::Index i = l.w1; i < l.b1; ++i) theta_[i] = rng.normal(0.0, w1_std);
  for (Eigen::Index i = l.w2; i < l.b2; ++i) theta_[i] = rng.normal(0.0, w2_std);
  grad_ = Eigen::VectorXd::Zero(l.total);
  reset_optimizer();
}

void WindowNet::reset_optimizer() {
  adam_m_ = Eigen::VectorXd::Zero(theta_.size());
  adam_v_ = Eigen::VectorXd::Zero(theta_.size());
  adam_t_ = 0;
}

WindowNet::Forward WindowNet::forward(const NetSequence& seq, std::span<const std::size_t> positions) const {
  const Layout l = layout();
  const Eigen::Index d = embed_;
  ConstMatMap emb(theta_.data() + l.emb, embed_, vocab_);
  ConstMatMap w1(theta_.data() + l.w1, hidden_, input_dim());
  ConstVecMap b1(theta_.data() + l.b1, hidden_);
  ConstMatMap w2(theta_.data() + l.w2, vocab_, hidden_);
  ConstVecMap b2(theta_.data() + l.b2, vocab_);
  ConstVecMap wv(theta_.data() + l.wv, hidden_);
  const double bv = theta_[l.bv];

  Forward fw;
  fw.positions.assign(positions.begin(), positions.end());
  const auto n = static_cast<Eigen::Index>(positions.size());
  fw.x.resize(input_dim(), n);

  Eigen::VectorXd cond_sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd prefix_sum = Eigen::VectorXd::Zero(d);
  std::size_t cond_count = 0;
  std::size_t prefix_count = 0;
  std::size_t consumed = 0;  // tokens folded into the running sums
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t t = positions[static_cast<std::size_t>(j)];
    if (t > seq.tokens.size() || (j > 0 && t < positions[static_cast<std::size_t>(j - 1)])) {
      throw std::logic_error("WindowNet::forward: positions must be ascending and <= sequence length");
    }
    while (consumed < t) {
      const int tok = seq.tokens[consumed];
      if (seq.cond[consumed]) {
        cond_sum += emb.col(tok);
        ++cond_count;
      }
      if (consumed >= seq.prefix_start) {
        prefix_sum += emb.col(tok);
        ++prefix_count;
      }
      ++consumed;
    }
    for (int k = 1; k <= kWindow; ++k) {
      const int tok = t >= static_cast<std::size_t>(k) ? seq.tokens[t - static_cast<std::size_t>(k)]
                                                      : Vocabulary::kPad;
      fw.x.block(static_cast<Eigen::Index>(k - 1) * d, j, d, 1) = emb.col(tok);
    }
    fw.x.block(kWindow * d, j, d, 1) =
        cond_count > 0 ? Eigen::VectorXd(cond_sum / static_cast<double>(cond_count)) : Eigen::VectorXd::Zero(d);
    fw.x.block((kWindow + 1) * d, j, d, 1) = prefix_count > 0
                                                 ? Eigen::VectorXd(prefix_sum / static_cast<double>(prefix_count))
                                                 : Eigen::VectorXd::Zero(d);
  }

  fw.h = ((w1 * fw.x).colwise() + b1).array().tanh().matrix();
  Eigen::MatrixXd z = (w2 * fw.h).colwise() + b2;
  // <pad> and <bos> are never predicted.
  z.row(Vocabulary::kPad).setConstant(kNegInf);
  if (vocab_ > Vocabulary::kBos) z.row(Vocabulary::kBos).setConstant(kNegInf);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mx = z.col(j).maxCoeff();
    const double lse = mx + std::log((z.col(j).array() - mx).exp().sum());
    z.col(j).array() -= lse;
  }
  fw.logprobs = std::move(z);
  fw.values = (fw.h.transpose() * wv).array() + bv;
  return fw;
}

void WindowNet::backward(const NetSequence& seq, const Forward& fw, const Eigen::MatrixXd& d_logits,
                         const Eigen::VectorXd& d_values) {
  const Layout l = layout();
  const Eigen::Index d = embed_;
  ConstMatMap w1(theta_.data() + l.w1, hidden_, input_dim());
  ConstMatMap w2(theta_.data() + l.w2, vocab_, hidden_);
  ConstVecMap wv(theta_.data() + l.wv, hidden_);

  MatMap g_emb(grad_.data() + l.emb, embed_, vocab_);
  MatMap g_w1(grad_.data() + l.w1, hidden_, input_dim());
  VecMap g_b1(grad_.data() + l.b1, hidden_);
  MatMap g_w2(grad_.data() + l.w2, vocab_, hidden_);
  VecMap g_b2(grad_.data() + l.b2, vocab_);
  VecMap g_wv(grad_.data() + l.wv, hidden_);

  g_w2.noalias() += d_logits * fw.h.transpose();
  g_b2 += d_logits.rowwise().sum();
  g_wv.noalias() += fw.h * d_values;
  grad_[l.bv] += d_values.sum();

  Eigen::MatrixXd d_h = w2.transpose() * d_logits;
  d_h.noalias() += wv * d_values.transpose();
  const Eigen::MatrixXd d_a = (d_h.array() * (1.0 - fw.h.array().square())).matrix();
  g_w1.noalias() += d_a * fw.x.transpose();
  g_b1 += d_a.rowwise().sum();
  const Eigen::MatrixXd d_x = w1.transpose() * d_a;

  const std::size_t len = seq.tokens.size();
  // Per-position gradients w.r.t. the two mean vectors, scattered afterwards.
  std::vector<Eigen::VectorXd> d_cond(len + 1), d_prefix(len + 1);
  std::vector<std::size_t> cond_counts(len + 1, 0), prefix_counts(len + 1, 0);
  {
    std::size_t c = 0, p = 0;
    for (std::size_t t = 0; t <= len; ++t) {
      cond_counts[t] = c;
      prefix_counts[t] = p;
      if (t < len) {
        if (seq.cond[t]) ++c;
        if (t >= seq.prefix_start) ++p;
      }
    }
  }
  for (Eigen::Index j = 0; j < d_x.cols(); ++j) {
    const std::size_t t = fw.positions[static_cast<std::size_t>(j)];
    for (int k = 1; k <= kWindow; ++k) {
      const int tok = t >= static_cast<std::size_t>(k) ? seq.tokens[t - static_cast<std::size_t>(k)]
                                                      : Vocabulary::kPad;
      g_emb.col(tok) += d_x.block(static_cast<Eigen::Index>(k - 1) * d, j, d, 1);
    }
    if (cond_counts[t] > 0) {
      Eigen::VectorXd g = d_x.block(kWindow * d, j, d, 1) / static_cast<double>(cond_counts[t]);
      if (d_cond[t].size() == 0) d_cond[t] = g;
      else d_cond[t] += g;
    }
    if (prefix_counts[t] > 0) {
      Eigen::VectorXd g = d_x.block((kWindow + 1) * d, j, d, 1) / static_cast<double>(prefix_counts[t]);
      if (d_prefix[t].size() == 0) d_prefix[t] = g;
      else d_prefix[t] += g;
    }
  }
  // Token i receives the sum of the mean-gradients of every later position.
  Eigen::VectorXd acc_c = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd acc_p = Eigen::VectorXd::Zero(d);
  for (std::size_t t = len; t >= 1; --t) {
    if (d_cond[t].size() != 0) acc_c += d_cond[t];
    if (d_prefix[t].size() != 0) acc_p += d_prefix[t];
    const std::size_t i = t - 1;
    const int tok = seq.tokens[i];
    if (seq.cond[i]) g_emb.col(tok) += acc_c;
    if (i >= seq.prefix_start) g_emb.col(tok) += acc_p;
  }
}

double WindowNet::adam_step(double lr, double max_grad_norm, double eps) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  const double norm = grad_.norm();
  if (!std::isfinite(norm)) throw RuntimeFailure("non-finite gradient norm");
  if (norm > max_grad_norm) grad_ *= max_grad_norm / (norm + 1e-6);
  ++adam_t_;
  adam_m_ = kBeta1 * adam_m_ + (1.0 - kBeta1) * grad_;
  adam_v_ = kBeta2 * adam_v_ + (1.0 - kBeta2) * grad_.cwiseProduct(grad_);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t_));
  const double step = lr * std::sqrt(c2) / c1;
  theta_.array() -= step * adam_m_.array() / (adam_v_.array().sqrt() + eps);
  return norm;
}

void WindowNet::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write weights: " + file.string());
  const std::int32_t dims[4] = {kWeightsVersion, vocab_, embed_, hidden_};
  const std::int64_t count = theta_.size();
  out.write(reinterpret_cast<const char*>(&kWeightsMagic), sizeof kWeightsMagic);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(theta_.data()), static_cast<std::streamsize>(count * sizeof(double)));
}

WindowNet WindowNet::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open weights: " + file.string());
  std::uint32_t magic = 0;
  std::int32_t dims[4] = {};
  std::int64_t count = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof magic);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || magic != kWeightsMagic || dims[0] != kWeightsVersion) {
    throw ValidationError("not a tiny weights file: " + file.string());
  }
  WindowNet net;
  net.vocab_ = dims[1];
  net.embed_ = dims[2];
  net.hidden_ = dims[3];
  if (count != net.layout().total) throw ValidationError("weights size mismatch in " + file.string());
  net.theta_.resize(count);
  in.read(reinterpret_cast<char*>(net.theta_.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ValidationError("truncated weights file: " + file.string());
  net.grad_ = Eigen::VectorXd::Zero(count);
  net.reset_optimizer();
  return net;
}

double linear_schedule(std::int64_t step, std::int64_t warmup, std::int64_t total) {
  if (step < warmup) return static_cast<double>(step) / static_cast<double>(std::max<std::int64_t>(1, warmup));
  return std::max(0.0, static_cast<double>(total - step) / static_cast<double>(std::max<std::int64_t>(1, total - warmup)));
}

// ---------------------------------------------------------------------------
// Shared teacher-forced training loop

namespace {

struct Example {
  NetSequence seq;
  std::vector<std::size_t> positions;
  std::vector<double> weights;
};

// Mean token cross-entropy per epoch; gradients are per-batch token means.
TrainStats train_examples(WindowNet& net, std::vector<Example> examples, std::int64_t skipped,
                          const TrainConfig& cfg) {
  TrainStats stats;
  stats.skipped_sequences = skipped;
  if (examples.empty()) return stats;

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = (examples.size() + batch - 1) / batch;
  const auto accum = static_cast<std::size_t>(cfg.gradient_accumulation);
  const auto steps_per_epoch = static_cast<std::int64_t>((n_batches + accum - 1) / accum);
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  net.reset_optimizer();
  net.zero_grad();
  std::int64_t step = 0;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    double epoch_weight = 0.0;
    std::size_t pending = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * batch;
      const std::size_t hi = std::min(order.size(), lo + batch);
      double batch_weight = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        for (double w : examples[order[i]].weights) batch_weight += w;
      }
      if (batch_weight <= 0.0) continue;
      const double scale = 1.0 / (batch_weight * static_cast<double>(accum));
      for (std::size_t i = lo; i < hi; ++i) {
        const Example& ex = examples[order[i]];
        const auto fw = net.forward(ex.seq, ex.positions);
        Eigen::MatrixXd d_logits = fw.logprobs.array().exp().matrix();
        for (std::size_t j = 0; j < ex.positions.size(); ++j) {
          const auto col = static_cast<Eigen::Index>(j);
          const int target = ex.seq.tokens[ex.positions[j]];
          const double w = ex.weights[j];
          epoch_loss -= w * fw.logprobs(target, col);
          epoch_weight += w;
          d_logits(target, col) -= 1.0;
          d_logits.col(col) *= w * scale;
        }
        net.backward(ex.seq, fw, d_logits, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ex.positions.size())));
      }
      ++pending;
      if (pending == accum || b + 1 == n_batches) {
        const double lr = cfg.learning_rate * linear_schedule(step, cfg.warmup_steps, total_steps);
        net.adam_step(lr, cfg.max_grad_norm, cfg.adam_epsilon);
        net.zero_grad();
        ++step;
        pending = 0;
      }
    }
    stats.epoch_loss.push_back(epoch_weight > 0.0 ? epoch_loss / epoch_weight : 0.0);
  }
  stats.optimizer_steps = step;
  return stats;
}

std::vector<int> to_ids(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------
// TinyCausalLM

TinyCausalLM::TinyCausalLM(Vocabulary vocab, const TinyOptions& options)
    : vocab_(std::move(vocab)),
      options_(options),
      net_(static_cast<int>(vocab_.size()), options.embed_dim, options.hidden_dim, options.seed) {}

std::vector<int> TinyCausalLM::token_ids(const SequenceEncoding& seq) const { return to_ids(vocab_, seq.tokens); }

std::string TinyCausalLM::decode_ids(std::span<const int> ids) const {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (int id : ids) {
    if (id == Vocabulary::kPad || id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) continue;
    toks.push_back(vocab_.token(id));
  }
  return detokenize(toks);
}

std::vector<int> TinyCausalLM::speaker_tag_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (is_speaker_tag(vocab_.token(static_cast<int>(i)))) out.push_back(static_cast<int>(i));
  }
  return out;
}

NetSequence TinyCausalLM::make_sequence(std::vector<int> ids) const {
  NetSequence seq;
  seq.cond.assign(ids.size(), 0);
  const int dialog = vocab_.id(surface(SpecialToken::kDialog));
  const int context = vocab_.id(surface(SpecialToken::kContext));
  std::size_t end = ids.size();
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == dialog || ids[i] == context) {
      end = i;
      break;
    }
  }
  for (std::size_t i = 1; i < end; ++i) seq.cond[i] = 1;
  seq.tokens = std::move(ids);
  seq.prefix_start = 0;
  return seq;
}

TrainStats TinyCausalLM::finetune(std::span<const SequenceEncoding> sequences, const TrainConfig& cfg) {
  std::vector<Example> examples;
  std::int64_t skipped = 0;
  const auto max_len = static_cast<std::size_t>(max_length());
  for (const auto& s : sequences) {
    std::vector<int> ids = token_ids(s);
    NetSequence seq = make_sequence(std::move(ids));
    std::size_t summary_end = 1;
    while (summary_end < seq.tokens.size() && seq.cond[summary_end]) ++summary_end;
    if (seq.tokens.size() > max_len) {
      // Drop conversation tokens from the right; a summary that alone
      // exceeds the limit leaves nothing to learn.
      if (summary_end >= max_len) {
        ++skipped;
        continue;
      }
      seq.tokens.resize(max_len);
      seq.cond.resize(max_len);
    }
    Example ex;
    const std::size_t first = cfg.mask_summary ? std::max<std::size_t>(1, summary_end) : 1;
    for (std::size_t t = first; t < seq.tokens.size(); ++t) {
      ex.positions.push_back(t);
      ex.weights.push_back(1.0);
    }
    if (ex.positions.empty()) {
      ++skipped;
      continue;
    }
    ex.seq = std::move(seq);
    examples.push_back(std::move(ex));
  }
  return train_examples(net_, std::move(examples), skipped, cfg);
}

std::vector<double> TinyCausalLM::next_token_logprobs(std::span<const int> context) const {
  NetSequence seq = make_sequence(std::vector<int>(context.begin(), context.end()));
  const std::size_t pos[] = {seq.tokens.size()};
  const auto fw = net_.forward(seq, pos);
  return std::vector<double>(fw.logprobs.data(), fw.logprobs.data() + fw.logprobs.rows());
}

PolicyScores TinyCausalLM::score(std::span<const int> prompt, std::span<const int> response) const {
  std::vector<int> ids(prompt.begin(), prompt.end());
  ids.insert(ids.end(), response.begin(), response.end());
  NetSequence seq = make_sequence(std::move(ids));
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < response.size(); ++i) positions.push_back(prompt.size() + i);
  const auto fw = net_.forward(seq, positions);
  PolicyScores out;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    out.logprobs.push_back(fw.logprobs(response[i], col));
    out.values.push_back(fw.values[col]);
  }
  return out;
}

void TinyCausalLM::accumulate_gradient(std::span<const int> prompt, std::span<const int> response,
                                       std::span<const double> d_logprobs, std::span<const double> d_values) {
  if (d_logprobs.size() != response.size() || d_values.size() != response.size()) {
    throw std::logic_error("accumulate_gradient: gradient/response length mismatch");
  }
  if (response.empty()) return;
  std::vector<int> ids(prompt.begin(), prompt.end());
  ids.insert(ids.end(), response.begin(), response.end());
  NetSequence seq = make_sequence(std::move(ids));
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < response.size(); ++i) positions.push_back(prompt.size() + i);
  const auto fw = net_.forward(seq, positions);
  // d logp(y) / d logits = onehot(y) - softmax
  Eigen::MatrixXd d_logits = -fw.logprobs.array().exp().matrix();
  Eigen::VectorXd dv(static_cast<Eigen::Index>(response.size()));
  for (std::size_t i = 0; i < response.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    d_logits(response[i], col) += 1.0;
    d_logits.col(col) *= d_logprobs[i];
    dv[col] = d_values[i];
  }
  net_.backward(seq, fw, d_logits, dv);
}

double TinyCausalLM::apply_gradients(double learning_rate, double max_grad_norm, double adam_epsilon) {
  const double norm = net_.adam_step(learning_rate, max_grad_norm, adam_epsilon);
  net_.zero_grad();
  return norm;
}

void TinyCausalLM::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  net_.save(dir / "weights.bin");
  vocab_.save(dir / "vocab.txt");
  write_config(dir, json{{"backend", "tiny"},
                         {"kind", "causal"},
                         {"format_version", kFormatVersion},
                         {"special_tokens", special_token_list(options_.max_speakers)},
                         {"max_length", max_length()},
                         {"options", options_.to_json()}});
}

std::unique_ptr<TinyCausalLM> TinyCausalLM::load(const std::filesystem::path& dir) {
  const json cfg = read_config(dir);
  if (cfg.value("kind", "") != "causal") throw ValidationError("not a causal model: " + dir.string());
  TinyOptions opts;
  if (cfg.contains("options")) opts = TinyOptions::from(BackendOptions{cfg["options"].value("seed", 0ULL), cfg["options"]});
  auto model = std::make_unique<TinyCausalLM>(Vocabulary::load(dir / "vocab.txt"), opts);
  model->net_ = WindowNet::load(dir / "weights.bin");
  if (static_cast<std::size_t>(model->net_.vocab()) != model->vocab_.size()) {
    throw ValidationError("weights/vocabulary size mismatch in " + dir.string());
  }
  return model;
}

// ---------------------------------------------------------------------------
// TinySeq2Seq

TinySeq2Seq::TinySeq2Seq(Vocabulary vocab, const TinyOptions& options)
    : vocab_(std::move(vocab)),
      options_(options),
      net_(static_cast<int>(vocab_.size()), options.embed_dim, options.hidden_dim, mix_seed(options.seed, 7)) {}

NetSequence TinySeq2Seq::source_sequence(std::string_view conversation_text) const {
  auto toks = surface_tokens(conversation_text);
  if (toks.size() > static_cast<std::size_t>(max_source_length())) {
    toks.resize(static_cast<std::size_t>(max_source_length()));
  }
  NetSequence seq;
  seq.tokens = to_ids(vocab_, toks);
  seq.cond.assign(seq.tokens.size(), 1);
  seq.prefix_start = seq.tokens.size();
  seq.tokens.push_back(vocab_.id(surface(SpecialToken::kBos)));
  seq.cond.push_back(0);
  return seq;
}

TrainStats TinySeq2Seq::finetune(std::span<const SummaryPair> pairs, const TrainConfig& cfg) {
  std::vector<Example> examples;
  const int eos = vocab_.id(surface(SpecialToken::kEos));
  for (const auto& p : pairs) {
    Example ex;
    ex.seq = source_sequence(p.conversation_text);
    auto target = surface_tokens(p.summary);
    if (target.size() > static_cast<std::size_t>(max_target_length() - 1)) {
      target.resize(static_cast<std::size_t>(max_target_length() - 1));
    }
    for (int id : to_ids(vocab_, target)) {
      ex.positions.push_back(ex.seq.tokens.size());
      ex.seq.tokens.push_back(id);
      ex.seq.cond.push_back(0);
    }
    ex.positions.push_back(ex.seq.tokens.size());
    ex.seq.tokens.push_back(eos);
    ex.seq.cond.push_back(0);
    ex.weights.assign(ex.positions.size(), 1.0);
    examples.push_back(std::move(ex));
  }
  return train_examples(net_, std::move(examples), 0, cfg);
}

std::string TinySeq2Seq::summarize(std::string_view conversation_text) const {
  NetSequence seq = source_sequence(conversation_text);
  const int eos = vocab_.id(surface(SpecialToken::kEos));
  std::vector<std::string> words;
  for (int step = 0; step < max_target_length(); ++step) {
    const std::size_t pos[] = {seq.tokens.size()};
    const auto fw = net_.forward(seq, pos);
    int best = -1;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (Eigen::Index v = 0; v < fw.logprobs.rows(); ++v) {
      if (step == 0 && v == eos) continue;  // non-empty output
      if (fw.logprobs(v, 0) > best_lp) {
        best_lp = fw.logprobs(v, 0);
        best = static_cast<int>(v);
      }
    }
    if (best < 0 || best == eos) break;
    seq.tokens.push_back(best);
    seq.cond.push_back(0);
    words.push_back(vocab_.token(best));
  }
  return join(words, " ");
}

void TinySeq2Seq::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  net_.save(dir / "weights.bin");
  vocab_.save(dir / "vocab.txt");
  write_config(dir, json{{"backend", "tiny"},
                         {"kind", "seq2seq"},
                         {"format_version", kFormatVersion},
                         {"special_tokens", special_token_list(options_.max_speakers)},
                         {"max_source_length", max_source_length()},
                         {"max_target_length", max_target_length()},
                         {"options", options_.to_json()}});
}

std::unique_ptr<TinySeq2Seq> TinySeq2Seq::load(const std::filesystem::path& dir) {
  const json cfg = read_config(dir);
  if (cfg.value("kind", "") != "seq2seq") throw ValidationError("not a seq2seq model: " + dir.string());
  TinyOptions opts;
  if (cfg.contains("options")) opts = TinyOptions::from(BackendOptions{cfg["options"].value("seed", 0ULL), cfg["options"]});
  auto model = std::make_unique<TinySeq2Seq>(Vocabulary::load(dir / "vocab.txt"), opts);
  model->net_ = WindowNet::load(dir / "weights.bin");
  if (static_cast<std::size_t>(model->net_.vocab()) != model->vocab_.size()) {
    throw ValidationError("weights/vocabulary size mismatch in " + dir.string());
  }
  return model;
}

BackendFactory make_factory() {
  BackendFactory f;
  f.new_causal = [](std::span<const std::string> corpus, const BackendOptions& options) -> std::unique_ptr<CausalLM> {
    const TinyOptions o = TinyOptions::from(options);
    return std::make_unique<TinyCausalLM>(Vocabulary::build(corpus, o), o);
  };
  f.new_seq2seq = [](std::span<const std::string> corpus,
                     const BackendOptions& options) -> std::unique_ptr<Seq2SeqModel> {
    const TinyOptions o = TinyOptions::from(options);
    return std::make_unique<TinySeq2Seq>(Vocabulary::build(corpus, o), o);
  };
  f.load_causal = [](const std::filesystem::path& dir) -> std::unique_ptr<CausalLM> { return TinyCausalLM::load(dir); };
  f.load_seq2seq = [](const std::filesystem::path& dir) -> std::unique_ptr<Seq2SeqModel> {
    return TinySeq2Seq::load(dir);
  };
  return f;
}

}  // namespace convforge::tiny
