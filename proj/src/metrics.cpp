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

#include "convforge/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>

#include "convforge/errors.hpp"
#include "convforge/generators.hpp"
#include "convforge/seqformat.hpp"
#include "convforge/text.hpp"

namespace convforge {

Tokens metric_tokens(std::string_view text) {
  Tokens out;
  for (const auto& piece : surface_tokens(text)) {
    if (is_special_surface(piece)) {
      out.push_back(piece);
      continue;
    }
    std::string word;
    for (char c : piece) {
      auto u = static_cast<unsigned char>(c);
      if (u < 0x80 && std::ispunct(u) != 0 && c != '_') {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
        out.emplace_back(1, c);
      } else {
        word += static_cast<char>(std::tolower(u));
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  }
  return out;
}

namespace {

struct VecHash {
  std::size_t operator()(const std::vector<std::string_view>& v) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto s : v) {
      h ^= std::hash<std::string_view>{}(s) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

using NgramCounts = std::unordered_map<std::vector<std::string_view>, std::int64_t, VecHash>;

NgramCounts count_ngrams(std::span<const std::string> toks, int n) {
  NgramCounts counts;
  const auto un = static_cast<std::size_t>(n);
  if (toks.size() < un) return counts;
  for (std::size_t i = 0; i + un <= toks.size(); ++i) {
    std::vector<std::string_view> g(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                    toks.begin() + static_cast<std::ptrdiff_t>(i + un));
    ++counts[std::move(g)];
  }
  return counts;
}

std::int64_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::int64_t overlap = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return overlap;
}

double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double rouge_n_f1(std::span<const std::string> candidate, std::span<const std::string> reference, int n) {
  if (n < 1) throw ValidationError("rouge_n_f1: n must be >= 1");
  const auto un = static_cast<std::size_t>(n);
  if (candidate.size() < un || reference.size() < un) return 0.0;
  const auto overlap = static_cast<double>(clipped_overlap(count_ngrams(candidate, n), count_ngrams(reference, n)));
  const double p = overlap / static_cast<double>(candidate.size() - un + 1);
  const double r = overlap / static_cast<double>(reference.size() - un + 1);
  return f1(p, r);
}

double rouge_n_f1(std::string_view candidate, std::string_view reference, int n) {
  return rouge_n_f1(metric_tokens(candidate), metric_tokens(reference), n);
}

double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  // Rolling single-row LCS table.
  std::vector<std::size_t> row(reference.size() + 1, 0);
  for (const auto& c : candidate) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (c == reference[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  const auto lcs = static_cast<double>(row.back());
  return f1(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
  return rouge_l_f1(metric_tokens(candidate), metric_tokens(reference));
}

namespace {

struct BleuStats {
  std::int64_t numerators[4] = {0, 0, 0, 0};
  std::int64_t denominators[4] = {0, 0, 0, 0};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  void add(const BleuStats& o) {
    for (int i = 0; i < 4; ++i) {
      numerators[i] += o.numerators[i];
      denominators[i] += o.denominators[i];
    }
    hyp_len += o.hyp_len;
    ref_len += o.ref_len;
  }
};

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const Tokens> references) {
  BleuStats s;
  for (int n = 1; n <= 4; ++n) {
    const auto cand = count_ngrams(candidate, n);
    // Clip each candidate n-gram by its maximum count in any single reference.
    NgramCounts max_ref;
    for (const auto& ref : references) {
      for (const auto& [g, c] : count_ngrams(ref, n)) {
        auto& slot = max_ref[g];
        slot = std::max(slot, c);
      }
    }
    std::int64_t total = 0;
    for (const auto& [g, c] : cand) total += c;
    s.numerators[n - 1] = clipped_overlap(cand, max_ref);
    s.denominators[n - 1] = std::max<std::int64_t>(1, total);
  }
  s.hyp_len = static_cast<std::int64_t>(candidate.size());
  // Closest reference length; ties resolve to the shorter one.
  std::int64_t best = -1;
  for (const auto& ref : references) {
    const auto len = static_cast<std::int64_t>(ref.size());
    if (best < 0 || std::llabs(len - s.hyp_len) < std::llabs(best - s.hyp_len) ||
        (std::llabs(len - s.hyp_len) == std::llabs(best - s.hyp_len) && len < best)) {
      best = len;
    }
  }
  s.ref_len = std::max<std::int64_t>(best, 0);
  return s;
}

double combine_bleu(const BleuStats& s) {
  if (s.numerators[0] == 0 || s.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto den = static_cast<double>(s.denominators[i]);
    const double p = s.numerators[i] == 0 ? kBleuSmoothingEpsilon / den : static_cast<double>(s.numerators[i]) / den;
    log_sum += 0.25 * std::log(p);
  }
  const double bp = s.hyp_len > s.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  return bp * std::exp(log_sum);
}

}  // namespace

double bleu4(std::span<const std::string> candidate, std::span<const Tokens> references) {
  if (references.empty()) throw ValidationError("bleu4: empty reference list");
  return combine_bleu(bleu_stats(candidate, references));
}

double bleu4(std::string_view candidate, std::span<const std::string> references) {
  if (references.empty()) throw ValidationError("bleu4: empty reference list");
  std::vector<Tokens> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(metric_tokens(r));
  return bleu4(metric_tokens(candidate), refs);
}

double corpus_bleu4(std::span<const std::string> candidates, std::span<const std::string> references) {
  if (candidates.size() != references.size()) {
    throw ValidationError("corpus_bleu4: candidate/reference count mismatch");
  }
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tokens refs[] = {metric_tokens(references[i])};
    total.add(bleu_stats(metric_tokens(candidates[i]), refs));
  }
  return combine_bleu(total);
}

// ---------------------------------------------------------------------------
// Porter stemmer

namespace {

class PorterStemmer {
 public:
  explicit PorterStemmer(std::string_view word) : b_(word), k_(static_cast<int>(word.size()) - 1) {}

  std::string run() {
    if (k_ <= 1) return b_;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool cons(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a':
      case 'e':
      case 'i':
      case 'o':
      case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(i - 1);
      default:
        return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int m() const {
    int n = 0;
    int i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i) {
      if (!cons(i)) return true;
    }
    return false;
  }

  bool doublec(int j) const {
    if (j < 1) return false;
    if (b_[static_cast<std::size_t>(j)] != b_[static_cast<std::size_t>(j - 1)]) return false;
    return cons(j);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[static_cast<std::size_t>(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) {
    const auto len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (std::string_view(b_).substr(static_cast<std::size_t>(k_ - len + 1), s.size()) != s) return false;
    j_ = k_ - len;
    return true;
  }

  void setto(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void r(std::string_view s) {
    if (m() > 0) setto(s);
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  void step1ab() {
    if (at(k_) == 's') {
      if (ends("sses")) {
        k_ -= 2;
      } else if (ends("ies")) {
        setto("i");
      } else if (at(k_ - 1) != 's') {
        --k_;
      }
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) {
        setto("ate");
      } else if (ends("bl")) {
        setto("ble");
      } else if (ends("iz")) {
        setto("ize");
      } else if (doublec(k_)) {
        --k_;
        const char ch = at(k_);
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else if (m() == 1 && cvc(k_)) {
        j_ = k_;
        setto("e");
      }
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  void step2() {
    if (k_ < 1) return;
    static constexpr std::pair<std::string_view, std::string_view> kRules[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},  {"izer", "ize"},
        {"abli", "able"},   {"alli", "al"},     {"entli", "ent"}, {"eli", "e"},      {"ousli", "ous"},
        {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},  {"alism", "al"},   {"iveness", "ive"},
        {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},  {"iviti", "ive"},  {"biliti", "ble"}};
    apply_first(kRules);
  }

  void step3() {
    static constexpr std::pair<std::string_view, std::string_view> kRules[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
    apply_first(kRules);
  }

  template <std::size_t N>
  void apply_first(const std::pair<std::string_view, std::string_view> (&rules)[N]) {
    // The longest matching suffix decides; its condition is checked once.
    const std::pair<std::string_view, std::string_view>* best = nullptr;
    for (const auto& rule : rules) {
      const auto len = static_cast<int>(rule.first.size());
      if (len > k_ + 1) continue;
      if (std::string_view(b_).substr(static_cast<std::size_t>(k_ - len + 1), rule.first.size()) != rule.first) {
        continue;
      }
      if (best == nullptr || rule.first.size() > best->first.size()) best = &rule;
    }
    if (best == nullptr) return;
    j_ = k_ - static_cast<int>(best->first.size());
    r(best->second);
  }

  void step4() {
    static constexpr std::string_view kSuffixes[] = {"al",  "ance", "ence", "er",  "ic",  "able", "ible",
                                                     "ant", "ement", "ment", "ent", "ion", "ou",   "ism",
                                                     "ate", "iti",  "ous",  "ive", "ize"};
    std::string_view best;
    for (auto s : kSuffixes) {
      const auto len = static_cast<int>(s.size());
      if (len > k_ + 1) continue;
      if (std::string_view(b_).substr(static_cast<std::size_t>(k_ - len + 1), s.size()) != s) continue;
      if (s.size() > best.size()) best = s;
    }
    if (best.empty()) return;
    j_ = k_ - static_cast<int>(best.size());
    if (best == "ion" && !(j_ >= 0 && (at(j_) == 's' || at(j_) == 't'))) return;
    if (m() > 1) k_ = j_;
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && doublec(k_) && m() > 1) --k_;
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  std::string b_;
  int k_;
  int j_ = 0;
};

bool is_lower_alpha(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

}  // namespace

std::string porter_stem(std::string_view word) {
  if (!is_lower_alpha(word)) return std::string(word);
  return PorterStemmer(word).run();
}

double meteor(std::span<const std::string> candidate, std::span<const std::string> reference,
              const MeteorParams& params) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<int> cand_to_ref(candidate.size(), -1);
  std::vector<char> ref_used(reference.size(), 0);

  auto align_stage = [&](auto&& key) {
    std::vector<std::string> ref_keys(reference.size());
    for (std::size_t j = 0; j < reference.size(); ++j) ref_keys[j] = key(reference[j]);
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_to_ref[i] >= 0) continue;
      const std::string k = key(candidate[i]);
      for (std::size_t j = 0; j < reference.size(); ++j) {
        if (!ref_used[j] && ref_keys[j] == k) {
          cand_to_ref[i] = static_cast<int>(j);
          ref_used[j] = 1;
          break;
        }
      }
    }
  };
  align_stage([](const std::string& w) { return w; });
  align_stage([](const std::string& w) { return porter_stem(w); });

  std::int64_t matches = 0;
  std::int64_t chunks = 0;
  int prev_ref = -2;
  bool prev_matched = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const int j = cand_to_ref[i];
    if (j < 0) {
      prev_matched = false;
      continue;
    }
    ++matches;
    if (!prev_matched || j != prev_ref + 1) ++chunks;
    prev_ref = j;
    prev_matched = true;
  }
  if (matches == 0) return 0.0;
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(chunks) / m, params.beta);
  return fmean * (1.0 - penalty);
}

double meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params) {
  return meteor(metric_tokens(candidate), metric_tokens(reference), params);
}

namespace {

constexpr const char* kMeteorNote = "meteor: exact and porter-stem matching only, no synonym tables";
constexpr const char* kTokenNote = "tokens: lowercase, whitespace split, punctuation detached";

}  // namespace

MetricReport evaluate_conversations(std::span<const GeneratedConversation> generated,
                                    std::span<const Conversation> references) {
  std::map<std::string, const Conversation*> by_id;
  for (const auto& r : references) by_id[r.id()] = &r;
  std::vector<std::string> missing;
  std::map<std::string, int> seen;
  for (const auto& g : generated) {
    if (by_id.count(g.conversation.id()) == 0) missing.push_back(g.conversation.id());
    ++seen[g.conversation.id()];
  }
  std::vector<std::string> unmatched;
  for (const auto& r : references) {
    if (seen.count(r.id()) == 0) unmatched.push_back(r.id());
  }
  if (!missing.empty() || !unmatched.empty() || generated.size() != references.size()) {
    std::string msg = "evaluate_conversations: id mismatch;";
    if (!missing.empty()) msg += " no reference for [" + join(missing, ", ") + "];";
    if (!unmatched.empty()) msg += " no generation for [" + join(unmatched, ", ") + "];";
    if (missing.empty() && unmatched.empty()) msg += " duplicate ids";
    throw ValidationError(msg);
  }

  MetricReport rep;
  std::vector<std::string> cands, refs;
  std::vector<Conversation> gen_convs;
  for (const auto& g : generated) {
    const Conversation& ref = *by_id.at(g.conversation.id());
    const std::string c = g.conversation.empty() ? std::string() : linearize(g.conversation);
    const std::string r = linearize(ref);
    const auto ct = metric_tokens(c);
    const auto rt = metric_tokens(r);
    const Tokens rts[] = {rt};
    rep.bleu4 += bleu4(ct, rts);
    rep.meteor += meteor(ct, rt);
    rep.rouge1_f1 += rouge_n_f1(ct, rt, 1);
    rep.rouge2_f1 += rouge_n_f1(ct, rt, 2);
    rep.rougeL_f1 += rouge_l_f1(ct, rt);
    cands.push_back(c);
    refs.push_back(r);
    gen_convs.push_back(g.conversation);
  }
  rep.n_pairs = static_cast<std::int64_t>(generated.size());
  if (rep.n_pairs > 0) {
    const auto n = static_cast<double>(rep.n_pairs);
    rep.bleu4 /= n;
    rep.meteor /= n;
    rep.rouge1_f1 /= n;
    rep.rouge2_f1 /= n;
    rep.rougeL_f1 /= n;
    rep.corpus_bleu4 = corpus_bleu4(cands, refs);
    rep.generated_stats = compute_stats(gen_convs);
  }
  rep.notes = {kMeteorNote, kTokenNote};
  return rep;
}

MetricReport evaluate_summaries(std::span<const std::string> generated, std::span<const std::string> references) {
  if (generated.size() != references.size()) {
    throw ValidationError("evaluate_summaries: " + std::to_string(generated.size()) + " generated vs " +
                          std::to_string(references.size()) + " references");
  }
  MetricReport rep;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const auto ct = metric_tokens(generated[i]);
    const auto rt = metric_tokens(references[i]);
    const Tokens rts[] = {rt};
    rep.rouge1_f1 += rouge_n_f1(ct, rt, 1);
    rep.rouge2_f1 += rouge_n_f1(ct, rt, 2);
    rep.rougeL_f1 += rouge_l_f1(ct, rt);
    rep.bleu4 += bleu4(ct, rts);
    rep.meteor += meteor(ct, rt);
  }
  rep.n_pairs = static_cast<std::int64_t>(generated.size());
  if (rep.n_pairs > 0) {
    const auto n = static_cast<double>(rep.n_pairs);
    rep.rouge1_f1 /= n;
    rep.rouge2_f1 /= n;
    rep.rougeL_f1 /= n;
    rep.bleu4 /= n;
    rep.meteor /= n;
    rep.corpus_bleu4 = corpus_bleu4(generated, references);
  }
  rep.notes = {kMeteorNote, kTokenNote};
  return rep;
}

}  // namespace convforge
