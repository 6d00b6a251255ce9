"""Corpus-level caption metrics: BLEU-1..4, CIDEr, ROUGE-L.

All metrics are pure functions of (candidate, references) token pairs.
BLEU is micro-averaged corpus BLEU with clipped precision, geometric
mean, closest-reference brevity penalty, and no smoothing.  CIDEr is the
TF-IDF n-gram cosine consensus, reported on the raw cosine scale in
[0, 1] (the evaluation-server convention multiplies by 10).  ROUGE-L is
the LCS F-measure with beta = 1.2, max over references.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError

NGRAM_MAX = 4
ROUGE_BETA = 1.2


@dataclass(frozen=True)
class EvalPair:
    candidate: tuple[str, ...]
    references: tuple[tuple[str, ...], ...]

    def __init__(self, candidate: Sequence[str], references: Sequence[Sequence[str]]):
        if not references:
            raise ConfigError("every evaluation pair needs at least one reference")
        object.__setattr__(self, "candidate", tuple(candidate))
        object.__setattr__(self, "references", tuple(tuple(r) for r in references))


@dataclass(frozen=True)
class MetricReport:
    bleu: tuple[float, float, float, float]
    cider: float
    rouge_l: float

    def to_json(self) -> dict:
        return {
            "bleu_1": self.bleu[0],
            "bleu_2": self.bleu[1],
            "bleu_3": self.bleu[2],
            "bleu_4": self.bleu[3],
            "cider": self.cider,
            "rouge_l": self.rouge_l,
        }


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def bleu(pairs: Sequence[EvalPair], n_max: int = NGRAM_MAX) -> list[float]:
    """Corpus BLEU-1..n_max (micro-averaged counts, no smoothing)."""
    if not pairs:
        raise ConfigError("bleu needs at least one pair")
    clipped = [0] * n_max
    guesses = [0] * n_max
    cand_len = 0
    ref_len = 0
    for pair in pairs:
        c = len(pair.candidate)
        cand_len += c
        # closest reference length; ties go to the shorter reference
        ref_len += min((abs(len(r) - c), len(r)) for r in pair.references)[1]
        for n in range(1, n_max + 1):
            counts = _ngram_counts(pair.candidate, n)
            max_ref = Counter()
            for ref in pair.references:
                for gram, cnt in _ngram_counts(ref, n).items():
                    max_ref[gram] = max(max_ref[gram], cnt)
            clipped[n - 1] += sum(min(cnt, max_ref[g]) for g, cnt in counts.items())
            guesses[n - 1] += max(0, c - n + 1)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len) if cand_len else 0.0
    scores = []
    log_sum = 0.0
    degenerate = False
    for n in range(1, n_max + 1):
        if clipped[n - 1] == 0 or guesses[n - 1] == 0:
            degenerate = True
        if degenerate:
            scores.append(0.0)
            continue
        log_sum += math.log(clipped[n - 1] / guesses[n - 1])
        scores.append(bp * math.exp(log_sum / n))
    return scores


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------

def _tfidf_vector(tokens: Sequence[str], n: int, idf: dict, num_docs: int) -> dict:
    counts = _ngram_counts(tokens, n)
    return {g: cnt * idf.get(g, math.log(num_docs)) for g, cnt in counts.items()}


def _cosine(a: dict, b: dict) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = sum(v * b[g] for g, v in a.items() if g in b)
    return dot / (na * nb)


def cider(pairs: Sequence[EvalPair]) -> float:
    """TF-IDF n-gram cosine consensus, averaged over n, refs, and corpus.

    Document frequencies come from the reference sets of the evaluation
    corpus itself; a candidate n-gram absent from every reference set is
    weighted as if it appeared in one document.
    """
    if not pairs:
        raise ConfigError("cider needs at least one pair")
    distinct_refsets = {tuple(sorted(p.references)) for p in pairs}
    if len(distinct_refsets) < 2:
        warnings.warn("CIDEr IDF is degenerate with fewer than two distinct "
                      "reference sets", stacklevel=2)
    num_docs = len(pairs)
    idf: dict = {}
    doc_freq: Counter = Counter()
    for pair in pairs:
        grams = set()
        for ref in pair.references:
            for n in range(1, NGRAM_MAX + 1):
                grams.update(_ngram_counts(ref, n))
        doc_freq.update(grams)
    for gram, df in doc_freq.items():
        idf[gram] = math.log(num_docs / max(1.0, df))

    total = 0.0
    for pair in pairs:
        pair_score = 0.0
        for n in range(1, NGRAM_MAX + 1):
            cand_vec = _tfidf_vector(pair.candidate, n, idf, num_docs)
            sim = 0.0
            for ref in pair.references:
                sim += _cosine(cand_vec, _tfidf_vector(ref, n, idf, num_docs))
            pair_score += sim / len(pair.references)
        total += pair_score / NGRAM_MAX
    return total / num_docs


# ---------------------------------------------------------------------------
# ROUGE-L
# ---------------------------------------------------------------------------

def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def _rouge_f(lcs: int, cand_len: int, ref_len: int, beta: float = ROUGE_BETA) -> float:
    if lcs == 0:
        return 0.0
    p = lcs / cand_len
    r = lcs / ref_len
    return (1 + beta * beta) * p * r / (r + beta * beta * p)


def rouge_l(pairs: Sequence[EvalPair]) -> float:
    """Mean over corpus of the best per-reference LCS F-measure."""
    if not pairs:
        raise ConfigError("rouge_l needs at least one pair")
    total = 0.0
    for pair in pairs:
        best = 0.0
        for ref in pair.references:
            if not pair.candidate or not ref:
                continue
            lcs = _lcs_length(pair.candidate, ref)
            best = max(best, _rouge_f(lcs, len(pair.candidate), len(ref)))
        total += best
    return total / len(pairs)


def evaluate_pairs(pairs: Sequence[EvalPair]) -> MetricReport:
    b = bleu(pairs)
    return MetricReport(bleu=tuple(b), cider=cider(pairs), rouge_l=rouge_l(pairs))
