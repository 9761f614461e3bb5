#!/usr/bin/env python3
"""Regenerate the synthetic fixture data in data/.

Sentences are sampled from a small hand-written PCFG whose lexicon is full of
near-homophones (cat/hat/bat, bear/pear, ...) so the noisy channel has
something to confuse. Writes a bracketed treebank, its yields as a corpus, and
a word-norm table.

    python3 tools/make_fixture_corpus.py [--out data] [--sentences 4000] [--seed 7]
"""

import argparse
import csv
import random
from pathlib import Path

GRAMMAR = {
    "S": [(("NP", "VP"), 0.75), (("NP", "VP", "PP"), 0.25)],
    "NP": [(("Det", "N"), 0.6), (("Det", "Adj", "N"), 0.3), (("Pro",), 0.1)],
    "VP": [(("V", "NP"), 0.65), (("V",), 0.15), (("V", "Adv"), 0.2)],
    "PP": [(("P", "NP"), 1.0)],
}

LEXICON = {
    "Det": ["the", "a", "some", "every"],
    "N": ["cat", "dog", "man", "hat", "bear", "boy", "bird", "king", "pear", "girl", "ball", "bat",
          "fox", "box", "van", "rat", "ring", "toy", "bell", "mat"],
    "Adj": ["big", "old", "small", "red", "green", "bad", "tall", "sad"],
    "V": ["saw", "liked", "found", "took", "ate", "held", "met", "heard", "bought", "sold"],
    "Pro": ["he", "she", "it"],
    "Adv": ["today", "slowly", "again"],
    "P": ["on", "in", "near", "with", "under"],
}

CONCRETE = {"N": 4.6, "Adj": 2.9, "V": 2.7, "Det": 1.5, "Pro": 2.0, "Adv": 1.9, "P": 1.8}
VOWELS = set("aeiouy")


def zipf_choice(rng, words, s=1.1):
    weights = [1.0 / (r + 1) ** s for r in range(len(words))]
    return rng.choices(words, weights=weights)[0]


def expand(rng, symbol):
    if symbol in LEXICON:
        return f"({symbol} {zipf_choice(rng, LEXICON[symbol])})"
    rhs_options, probs = zip(*GRAMMAR[symbol])
    rhs = rng.choices(rhs_options, weights=probs)[0]
    return f"({symbol} " + " ".join(expand(rng, s) for s in rhs) + ")"


def tree_yield(tree):
    return [tok.rstrip(")") for tok in tree.split() if not tok.startswith("(")]


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def syllables(word):
    groups, last = 0, False
    for c in word:
        v = c in VOWELS
        groups += v and not last
        last = v
    if word.endswith("e") and groups > 1 and not word.endswith("le"):
        groups -= 1
    return max(groups, 1)


def norms(rng):
    tag_of = {w: t for t, ws in LEXICON.items() for w in ws}
    words = sorted(tag_of)
    rows = []
    for w in words:
        others = sorted(levenshtein(w, o) for o in words if o != w)
        pld = sum(others[:20]) / min(20, len(others))
        rows.append({
            "word": w,
            "aoa": round(2.0 + 0.6 * len(w) + rng.uniform(-0.8, 0.8), 2),
            "concreteness": round(CONCRETE[tag_of[w]] + rng.uniform(-0.4, 0.4), 2),
            "n_phonemes": len(w) - (1 if w.endswith("e") else 0),
            "n_syllables": syllables(w),
            "pld20": round(pld, 3),
        })
    # one word left without norms on purpose
    rows[words.index("every")]["aoa"] = ""
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    ap.add_argument("--sentences", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trees = [expand(rng, "S") for _ in range(args.sentences)]
    (out / "fixture_treebank.txt").write_text("\n".join(trees) + "\n")
    (out / "fixture_corpus.txt").write_text("\n".join(" ".join(tree_yield(t)) for t in trees) + "\n")
    with open(out / "fixture_norms.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["word", "aoa", "concreteness", "n_phonemes", "n_syllables", "pld20"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(norms(rng))


if __name__ == "__main__":
    main()
