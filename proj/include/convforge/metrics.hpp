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

// Text-overlap metrics (ROUGE-1/2/L F1, BLEU-4, METEOR without synonym
// tables) and the aggregate reports built from them.
//
// Tokenization is shared by every metric: lowercase, whitespace split, ASCII
// punctuation other than '_' detached into its own token, special tokens such
// as <person_0> kept whole.

#ifndef CONVFORGE_METRICS_HPP_
#define CONVFORGE_METRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convforge/corpus.hpp"

namespace convforge {

struct GeneratedConversation;

using Tokens = std::vector<std::string>;

Tokens metric_tokens(std::string_view text);

double rouge_n_f1(std::span<const std::string> candidate, std::span<const std::string> reference, int n);
double rouge_n_f1(std::string_view candidate, std::string_view reference, int n);

double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference);
double rouge_l_f1(std::string_view candidate, std::string_view reference);

// Add-epsilon smoothing on zero n-gram precisions.
inline constexpr double kBleuSmoothingEpsilon = 0.1;

double bleu4(std::span<const std::string> candidate, std::span<const Tokens> references);
double bleu4(std::string_view candidate, std::span<const std::string> references);

// Counts are aggregated over all pairs before combining. One reference per
// candidate.
double corpus_bleu4(std::span<const std::string> candidates, std::span<const std::string> references);

// Porter (1980) suffix stripper. Expects a lowercase ASCII word.
std::string porter_stem(std::string_view word);

struct MeteorParams {
  double alpha = 0.9;  // recall weighted 9:1 over precision
  double beta = 3.0;
  double gamma = 0.5;
};

double meteor(std::span<const std::string> candidate, std::span<const std::string> reference,
              const MeteorParams& params = {});
double meteor(std::string_view candidate, std::string_view reference, const MeteorParams& params = {});

struct MetricReport {
  double bleu4 = 0.0;
  double corpus_bleu4 = 0.0;
  double meteor = 0.0;
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rougeL_f1 = 0.0;
  std::int64_t n_pairs = 0;
  std::optional<CorpusStats> generated_stats;
  std::vector<std::string> notes;
};

// Pairs are matched by conversation id; both sides are linearized with
// speaker tags. Throws ValidationError listing ids that do not line up.
MetricReport evaluate_conversations(std::span<const GeneratedConversation> generated,
                                    std::span<const Conversation> references);

MetricReport evaluate_summaries(std::span<const std::string> generated, std::span<const std::string> references);

}  // namespace convforge

#endif  // CONVFORGE_METRICS_HPP_
