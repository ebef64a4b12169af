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

// Independent reference implementations used as test oracles.

#ifndef CONVFORGE_TESTS_TESTING_BRUTE_FORCE_HPP_
#define CONVFORGE_TESTS_TESTING_BRUTE_FORCE_HPP_

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace convforge::testing_util {

inline std::vector<std::string> random_tokens(std::mt19937_64& gen, int min_len, int max_len, int vocab) {
  std::uniform_int_distribution<int> len(min_len, max_len), word(0, vocab - 1);
  std::vector<std::string> out(static_cast<std::size_t>(len(gen)));
  for (auto& t : out) t = "w" + std::to_string(word(gen));
  return out;
}

// Counts every n-gram by scanning all windows, then clips pairwise.
inline double brute_rouge_n(const std::vector<std::string>& c, const std::vector<std::string>& r, int n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::vector<std::vector<std::string>> g;
    for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) g.emplace_back(t.begin() + i, t.begin() + i + n);
    return g;
  };
  const auto gc = grams(c), gr = grams(r);
  if (gc.empty() || gr.empty()) return 0.0;
  std::vector<bool> used(gr.size(), false);
  int overlap = 0;
  for (const auto& x : gc) {
    for (std::size_t j = 0; j < gr.size(); ++j) {
      if (!used[j] && gr[j] == x) {
        used[j] = true;
        ++overlap;
        break;
      }
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(gc.size());
  const double rr = static_cast<double>(overlap) / static_cast<double>(gr.size());
  return 2.0 * p * rr / (p + rr);
}

// LCS by the recursive definition, memoized on suffix pairs.
inline int brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    int best = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

// Exhaustive subsequence enumeration; only for short inputs.
inline int exhaustive_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  int best = 0;
  const std::size_t n = a.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) sub.push_back(a[i]);
    }
    if (static_cast<int>(sub.size()) <= best) continue;
    std::size_t k = 0;
    for (const auto& t : b) {
      if (k < sub.size() && t == sub[k]) ++k;
    }
    if (k == sub.size()) best = static_cast<int>(sub.size());
  }
  return best;
}

inline double brute_rouge_l(const std::vector<std::string>& c, const std::vector<std::string>& r) {
  const int lcs = c.size() <= 12 ? exhaustive_lcs(c, r) : brute_lcs(c, r);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(c.size());
  const double rr = static_cast<double>(lcs) / static_cast<double>(r.size());
  return 2.0 * p * rr / (p + rr);
}

}  // namespace convforge::testing_util

#endif  // CONVFORGE_TESTS_TESTING_BRUTE_FORCE_HPP_
