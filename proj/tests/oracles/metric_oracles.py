# Copyright 2026 The ConvForge Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent reference values for the metric tests.

Run offline; the printed numbers are frozen into tests/metrics_test.cc.
Needs nltk.
"""

from collections import Counter
from fractions import Fraction
import itertools

from nltk.stem.porter import PorterStemmer
from nltk.translate.bleu_score import SmoothingFunction, corpus_bleu, sentence_bleu

PAIRS = [
    ("the cat sat on the mat", "the cat is on the mat"),
    ("person_0 will be late today", "person_0 will be late"),
    ("i will bring the cake tomorrow", "person_1 will bring a cake tomorrow evening"),
    ("see you at noon then", "see you then"),
    ("ok", "ok sounds good to me"),
    ("can you pick me up at the station", "can you pick me up at the station"),
    ("we should paint the car on friday", "person_0 and person_1 will paint the car on saturday"),
    ("no problem at all", "great idea see you"),
    ("the meeting moved to monday morning at nine", "the meeting is on monday at nine"),
    ("call the shop and order pasta for dinner", "person_0 will order pasta for dinner"),
]

STEM_WORDS = [
    "caresses", "ponies", "ties", "caress", "cats", "feed", "agreed", "plastered", "bled",
    "motoring", "sing", "conflated", "troubled", "sized", "hopping", "tanned", "falling",
    "hissing", "fizzed", "failing", "filing", "happy", "sky", "relational", "conditional",
    "rational", "valenci", "hesitanci", "digitizer", "conformabli", "radicalli", "differentli",
    "vileli", "analogousli", "vietnamization", "predication", "operator", "feudalism",
    "decisiveness", "hopefulness", "callousness", "formaliti", "sensitiviti", "sensibiliti",
    "triplicate", "formative", "formalize", "electriciti", "electrical", "hopeful", "goodness",
    "revival", "allowance", "inference", "airliner", "gyroscopic", "adjustable", "defensible",
    "irritant", "replacement", "adjustment", "dependent", "adoption", "homologou", "communism",
    "activate", "angulariti", "homologous", "effective", "bowdlerize", "probate", "rate",
    "cease", "controll", "roll", "running", "run", "runs", "generalization", "oscillators",
    "is", "as", "news", "dying", "lying", "bye", "meeting", "flowers", "noon", "agrees",
]


def ngrams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def rouge_n(c, r, n):
    cc, rc = ngrams(c, n), ngrams(r, n)
    if not cc or not rc:
        return 0.0
    overlap = sum((cc & rc).values())
    if overlap == 0:
        return 0.0
    p = Fraction(overlap, sum(cc.values()))
    rr = Fraction(overlap, sum(rc.values()))
    return float(2 * p * rr / (p + rr))


def lcs_bruteforce(a, b):
    best = 0
    for k in range(min(len(a), len(b)), 0, -1):
        subs = set(itertools.combinations(a, k))
        if any(s in subs for s in itertools.combinations(b, k)):
            return k
    return best


def rouge_l(c, r):
    lcs = lcs_bruteforce(c, r)
    if lcs == 0:
        return 0.0
    p, rr = Fraction(lcs, len(c)), Fraction(lcs, len(r))
    return float(2 * p * rr / (p + rr))


def meteor_hand(m, cand_len, ref_len, chunks, alpha=0.9, beta=3.0, gamma=0.5):
    if m == 0:
        return 0.0
    p, r = m / cand_len, m / ref_len
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    return fmean * (1 - gamma * (chunks / m) ** beta)


def main():
    sm = SmoothingFunction(epsilon=0.1).method1
    print("# sentence BLEU-4 (method1, eps 0.1)")
    for c, r in PAIRS:
        print(f"{sentence_bleu([r.split()], c.split(), smoothing_function=sm):.12f}")
    print("# corpus BLEU-4 (no smoothing)")
    print(f"{corpus_bleu([[r.split()] for _, r in PAIRS], [c.split() for c, _ in PAIRS]):.12f}")
    print("# ROUGE-1, ROUGE-2, ROUGE-L")
    for c, r in PAIRS:
        cs, rs = c.split(), r.split()
        print(f"{rouge_n(cs, rs, 1):.12f} {rouge_n(cs, rs, 2):.12f} {rouge_l(cs, rs):.12f}")
    print("# METEOR hand evaluations")
    print("identical 'a b c':", f"{meteor_hand(3, 3, 3, 1):.12f}")
    print("'running late' vs 'run late':", f"{meteor_hand(2, 2, 2, 1):.12f}")
    print("'c b a' vs 'a b c':", f"{meteor_hand(3, 3, 3, 3):.12f}")
    print("'the cat sat on the mat' vs 'the cat is on the mat':", f"{meteor_hand(5, 6, 6, 2):.12f}")
    print("# Porter stems (original algorithm)")
    ps = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    print(", ".join(f'{{"{w}", "{ps.stem(w)}"}}' for w in STEM_WORDS))


if __name__ == "__main__":
    main()
