"""Corpus-level BLEU-4 on whitespace tokens, with add-one smoothing for the
higher orders and the standard brevity penalty."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class BleuReport:
    """Score on the 0-100 scale plus its parts."""

    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str]) -> BleuReport:
    """BLEU-4 over the whole corpus (single reference per hypothesis).

    Counts are pooled over the corpus before the precisions are taken. For
    n >= 2, a zero clipped-match count is smoothed to (0+1)/(total+1); a
    zero unigram precision short-circuits the score to 0.
    """
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = hyp.split()
        r = ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            h_counts = _ngrams(h, n)
            r_counts = _ngrams(r, n)
            totals[n - 1] += max(len(h) - n + 1, 0)
            matches[n - 1] += sum(min(c, r_counts[g]) for g, c in h_counts.items())

    precisions = []
    for n in range(1, 5):
        if n >= 2 and matches[n - 1] == 0:
            precisions.append((matches[n - 1] + 1.0) / (totals[n - 1] + 1.0))
        elif totals[n - 1] > 0:
            precisions.append(matches[n - 1] / totals[n - 1])
        else:
            precisions.append(0.0)

    if hyp_len == 0:
        return BleuReport(0.0, tuple(precisions), 0.0, hyp_len, ref_len)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if precisions[0] <= 0.0:
        return BleuReport(0.0, tuple(precisions), bp, hyp_len, ref_len)
    log_avg = math.fsum(math.log(p) for p in precisions) / 4.0
    return BleuReport(100.0 * bp * math.exp(log_avg), tuple(precisions), bp,
                      hyp_len, ref_len)
