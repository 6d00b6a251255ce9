"""Metric tests with independent oracles.

CIDEr is cross-checked against a from-scratch TF-IDF/cosine
implementation (numpy vectors over the explicit n-gram union); BLEU and
ROUGE-L examples are frozen from hand arithmetic.
"""

import math
from collections import Counter
from itertools import permutations

import numpy as np
import pytest

from layoutcap.errors import ConfigError
from layoutcap.metrics import EvalPair, bleu, cider, evaluate_pairs, rouge_l
from layoutcap.rng import Rng


def pair(cand, refs):
    return EvalPair(cand.split(), [r.split() for r in refs])


# ---------------------------------------------------------------------------
# independent CIDEr oracle: explicit dense vectors, fractional TF
# ---------------------------------------------------------------------------

def brute_force_cider(pairs):
    n_docs = len(pairs)
    scores = []
    for n in range(1, 5):
        def grams(tokens):
            return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))

        doc_grams = [set().union(*(grams(r) for r in p.references)) for p in pairs]
        universe = sorted(set().union(*(set(grams(p.candidate)) for p in pairs),
                                      *(g for g in doc_grams)))
        index = {g: i for i, g in enumerate(universe)}
        idf = np.zeros(len(universe))
        for g, i in index.items():
            df = sum(1 for dg in doc_grams if g in dg)
            idf[i] = math.log(n_docs / max(1.0, df))

        def vec(tokens):
            v = np.zeros(len(universe))
            counts = grams(tokens)
            total = sum(counts.values())
            for g, c in counts.items():
                v[index[g]] = (c / total) * idf[index[g]] if total else 0.0
            return v

        per_pair = []
        for p in pairs:
            cv = vec(p.candidate)
            sims = []
            for r in p.references:
                rv = vec(r)
                denom = np.linalg.norm(cv) * np.linalg.norm(rv)
                sims.append(float(cv @ rv / denom) if denom > 0 else 0.0)
            per_pair.append(sum(sims) / len(sims))
        scores.append(per_pair)
    per_pair_mean = np.mean(np.array(scores), axis=0)
    return float(per_pair_mean.mean())


class TestBleu:
    def test_identical_candidate_scores_one(self):
        pairs = [pair("a dog runs across the green field", ["a dog runs across the green field"])]
        assert bleu(pairs) == [1.0, 1.0, 1.0, 1.0]

    def test_clipping_with_repeated_token(self):
        # candidate "the the the the" vs reference "the cat":
        # clipped unigram precision 1/4; candidate longer than reference
        # so the brevity penalty stays 1 -> B1 = 0.25 exactly
        pairs = [pair("the the the the", ["the cat"])]
        scores = bleu(pairs)
        assert abs(scores[0] - 0.25) < 1e-9
        assert scores[1] == scores[2] == scores[3] == 0.0

    def test_brevity_penalty_short_candidate(self):
        # candidate "a dog" (len 2) vs reference "a dog runs fast" (len 4):
        # p1 = 1, p2 = 1, BP = exp(1 - 4/2)
        pairs = [pair("a dog", ["a dog runs fast"])]
        scores = bleu(pairs)
        assert abs(scores[0] - math.exp(-1.0)) < 1e-9
        assert abs(scores[1] - math.exp(-1.0)) < 1e-9

    def test_no_shared_fourgrams_gives_zero_b4(self):
        pairs = [pair("a b c x e f", ["a b c d e f"])]
        assert bleu(pairs)[3] == 0.0
        assert bleu(pairs)[0] > 0.0

    def test_two_pair_corpus_hand_derived(self):
        # pair 1: cand "a b c", ref "a b c"  (3 unigrams clipped, 2 bigrams)
        # pair 2: cand "a x", ref "a b"      (1 unigram clipped, 0 bigrams)
        # micro counts: p1 = 4/5, p2 = 2/3; lengths: c = 5, r = 5 -> BP = 1
        pairs = [pair("a b c", ["a b c"]), pair("a x", ["a b"])]
        scores = bleu(pairs)
        assert abs(scores[0] - 4 / 5) < 1e-12
        assert abs(scores[1] - math.sqrt((4 / 5) * (2 / 3))) < 1e-12

    def test_closest_reference_length_tie_prefers_shorter(self):
        # candidate length 3; refs of lengths 2 and 4 tie -> r = 2 -> BP = 1
        pairs = [pair("a b c", ["a b", "a b c d"])]
        assert bleu(pairs)[0] == 1.0

    def test_values_in_unit_interval_on_random_corpora(self):
        rng = Rng(12)
        vocab = ["w%d" % i for i in range(8)]
        for _ in range(20):
            pairs = []
            for i in range(4):
                cand = [vocab[rng.randint(8)] for _ in range(1 + rng.randint(8))]
                refs = [[vocab[rng.randint(8)] for _ in range(1 + rng.randint(8))]
                        for _ in range(1 + rng.randint(2))]
                pairs.append(EvalPair(cand, refs))
            for s in bleu(pairs):
                assert 0.0 <= s <= 1.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigError):
            bleu([])


class TestCider:
    def test_identical_scores_one(self):
        pairs = [
            pair("a red dog runs fast today", ["a red dog runs fast today"]),
            pair("two cats sleep near the window", ["two cats sleep near the window"]),
            pair("birds fly over tall green trees", ["birds fly over tall green trees"]),
        ]
        assert abs(cider(pairs) - 1.0) < 1e-12

    def test_disjoint_scores_zero(self):
        pairs = [
            pair("a b c d", ["e f g h"]),
            pair("i j k l", ["m n o p"]),
        ]
        assert cider(pairs) == 0.0

    def test_matches_brute_force_on_toy_corpora(self):
        corpora = [
            [pair("a dog runs", ["a dog sits", "the dog runs"]),
             pair("a cat sits", ["a cat sits on the mat"])],
            [pair("x y", ["x y"]), pair("x z", ["z x"]), pair("y z w", ["w y z"])],
            [pair("the dog", ["the dog", "a dog"]),
             pair("the cat", ["the cat"]),
             pair("a bird flies high", ["a bird flies", "the bird flies high"])],
        ]
        for pairs in corpora:
            assert abs(cider(pairs) - brute_force_cider(pairs)) < 1e-9

    def test_two_pair_shared_unigram_frozen_value(self):
        pairs = [pair("a dog", ["a dog"]), pair("a cat", ["a cat"])]
        expected = brute_force_cider(pairs)
        assert abs(cider(pairs) - expected) < 1e-9
        # "a" is in both reference documents (idf 0) but each pair keeps a
        # distinctive unigram and bigram (cosine 1 for n=1,2); the 2-token
        # captions have no 3/4-grams (0 for n=3,4) -> (1+1+0+0)/4 = 0.5
        assert abs(expected - 0.5) < 1e-12

    def test_single_pair_warns_degenerate_idf(self):
        with pytest.warns(UserWarning):
            cider([pair("a b", ["a b"])])

    def test_reference_order_invariant(self):
        refs = ["a dog runs", "the dog sits", "dogs run fast"]
        base = [pair("a dog runs fast", refs), pair("a cat naps", ["a cat naps"])]
        values = set()
        for perm in permutations(refs):
            pairs = [pair("a dog runs fast", list(perm)), pair("a cat naps", ["a cat naps"])]
            values.add(round(cider(pairs), 15))
        assert len(values) == 1
        assert round(cider(base), 15) in values


class TestRougeL:
    def test_identical_scores_one(self):
        assert rouge_l([pair("a b c d", ["a b c d"])]) == 1.0

    def test_disjoint_scores_zero(self):
        assert rouge_l([pair("a b", ["c d"])]) == 0.0

    def test_hand_derived_fmeasure(self):
        # cand "a b c", ref "a c": LCS=2, P=2/3, R=1,
        # F = (1 + 1.44) * P * R / (R + 1.44 * P)
        expected = 2.44 * (2 / 3) / (1 + 1.44 * (2 / 3))
        assert abs(rouge_l([pair("a b c", ["a c"])]) - expected) < 1e-9

    def test_max_over_references(self):
        pairs = [pair("a b c", ["x y z", "a b c"])]
        assert rouge_l(pairs) == 1.0

    def test_mean_over_corpus(self):
        p1 = rouge_l([pair("a b c", ["a c"])])
        p2 = rouge_l([pair("a b", ["a b"])])
        both = rouge_l([pair("a b c", ["a c"]), pair("a b", ["a b"])])
        assert abs(both - (p1 + p2) / 2) < 1e-12

    def test_in_unit_interval(self):
        rng = Rng(13)
        vocab = ["w%d" % i for i in range(5)]
        for _ in range(20):
            cand = [vocab[rng.randint(5)] for _ in range(1 + rng.randint(6))]
            refs = [[vocab[rng.randint(5)] for _ in range(1 + rng.randint(6))]]
            v = rouge_l([EvalPair(cand, refs)])
            assert 0.0 <= v <= 1.0


class TestEvaluatePairs:
    def test_report_fields(self):
        pairs = [
            pair("a dog runs fast today", ["a dog runs fast today"]),
            pair("two cats sleep near windows", ["two cats sleep near windows"]),
        ]
        report = evaluate_pairs(pairs)
        assert report.bleu == (1.0, 1.0, 1.0, 1.0)
        assert abs(report.cider - 1.0) < 1e-12
        assert report.rouge_l == 1.0
        json_obj = report.to_json()
        assert set(json_obj) == {"bleu_1", "bleu_2", "bleu_3", "bleu_4", "cider", "rouge_l"}

    def test_pure_function_no_state(self):
        pairs = [pair("a b", ["a b"]), pair("c d", ["c d e"])]
        first = evaluate_pairs(pairs)
        second = evaluate_pairs(pairs)
        assert first == second

    def test_requires_reference(self):
        with pytest.raises(ConfigError):
            EvalPair(["a"], [])
