"""Vocabulary estimation: seed substrings, EM over segmentation lattices, pruning."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

from .lattice import build_lattice
from .vocab import Vocabulary

_NEG_INF = float("-inf")
_PROB_FLOOR = 1e-300


def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == _NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


def estimate_vocabulary(
    corpus: Iterable[str],
    target_size: int,
    max_piece_len: int = 8,
    em_iters: int = 4,
    prune_fraction: float = 0.2,
    seed_min_freq: int = 2,
    seed_cap: int | None = None,
    ll_trace: list | None = None,
) -> Vocabulary:
    """Estimate a unigram piece vocabulary of target_size entries from raw text.

    Seeds every substring up to max_piece_len seen at least seed_min_freq
    times (single characters always), initial probability proportional to
    frequency * length. Rounds of em_iters EM iterations alternate with
    pruning: the prune_fraction of multi-character pieces with the smallest
    estimated likelihood loss are dropped each round until the target is
    reached. Characters are never pruned.

    target_size counts the four reserved symbols. If the corpus does not
    contain enough distinct candidate substrings, the result is smaller than
    target_size (all available pieces). ll_trace, if given, receives one list
    of per-iteration corpus log-likelihoods per EM round.
    """
    sentences = [s for s in corpus if s]
    if not sentences:
        raise ValueError("estimation corpus is empty")
    if em_iters < 1:
        raise ValueError("em_iters must be >= 1")
    if not 0.0 < prune_fraction < 1.0:
        raise ValueError("prune_fraction must be in (0, 1)")
    sent_counts = Counter(sentences)
    chars = sorted({c for s in sentences for c in s})
    if target_size < len(chars) + 4:
        raise ValueError(
            f"vocab too small: target_size {target_size} cannot cover "
            f"{len(chars)} characters plus reserved ids")
    n_multi_target = target_size - 4 - len(chars)

    char_freq: Counter[str] = Counter()
    sub_freq: Counter[str] = Counter()
    for s, mult in sent_counts.items():
        for c in s:
            char_freq[c] += mult
        L = len(s)
        for i in range(L):
            for j in range(i + 2, min(i + max_piece_len, L) + 1):
                sub_freq[s[i:j]] += mult
    multi = {p: f for p, f in sub_freq.items() if f >= seed_min_freq}
    if seed_cap is not None and len(multi) > seed_cap:
        ranked = sorted(multi.items(), key=lambda kv: (-kv[1] * len(kv[0]), kv[0]))
        multi = dict(ranked[:seed_cap])

    weights = {c: float(max(char_freq[c], 1)) for c in chars}
    weights.update({p: float(f * len(p)) for p, f in multi.items()})
    total_w = math.fsum(weights.values())
    probs = {p: w / total_w for p, w in weights.items()}

    sent_items = sorted(sent_counts.items())
    while True:
        probs, counts, lls = _em_round(sent_items, probs, max_piece_len, em_iters)
        if ll_trace is not None:
            ll_trace.append(lls)
        multi_pieces = [p for p in probs if len(p) > 1]
        if len(multi_pieces) <= n_multi_target:
            break
        n_drop = min(len(multi_pieces) - n_multi_target,
                     max(1, int(prune_fraction * len(multi_pieces))))
        losses = _prune_losses(probs, counts, multi_pieces, max_piece_len)
        for p in sorted(multi_pieces, key=lambda p: (losses[p], p))[:n_drop]:
            del probs[p]
        norm = math.fsum(probs.values())
        probs = {p: v / norm for p, v in probs.items()}

    norm = math.fsum(probs.values())
    pieces = [(p, math.log(v / norm)) for p, v in probs.items()]
    pieces.sort(key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(pieces)


def _build_edge_cache(sent_items, probs: dict[str, float], max_piece_len: int):
    """Per sentence: multiplicity, length, flat edge list, edges grouped by end/start."""
    index = {p: i for i, p in enumerate(sorted(probs))}
    cache = []
    for s, mult in sent_items:
        L = len(s)
        by_end: list[list[tuple[int, int]]] = [[] for _ in range(L + 1)]
        by_start: list[list[tuple[int, int]]] = [[] for _ in range(L + 1)]
        flat: list[tuple[int, int, int]] = []
        for i in range(L):
            for j in range(i + 1, min(i + max_piece_len, L) + 1):
                pidx = index.get(s[i:j])
                if pidx is not None:
                    by_end[j].append((i, pidx))
                    by_start[i].append((j, pidx))
                    flat.append((i, j, pidx))
        cache.append((mult, L, flat, by_end, by_start))
    return index, cache


def _em_round(sent_items, probs: dict[str, float], max_piece_len: int, em_iters: int):
    """em_iters EM iterations over a fixed piece set; returns (probs, counts, lls)."""
    index, cache = _build_edge_cache(sent_items, probs, max_piece_len)
    pieces = sorted(probs)
    cur = [probs[p] for p in pieces]
    lls: list[float] = []
    counts: list[float] = []
    for _ in range(em_iters):
        lp = [math.log(v) for v in cur]
        counts = [0.0] * len(pieces)
        ll = 0.0
        for mult, L, flat, by_end, by_start in cache:
            F = [_NEG_INF] * (L + 1)
            F[0] = 0.0
            for pos in range(1, L + 1):
                acc = _NEG_INF
                for start, pidx in by_end[pos]:
                    acc = _logaddexp(acc, F[start] + lp[pidx])
                F[pos] = acc
            B = [_NEG_INF] * (L + 1)
            B[L] = 0.0
            for pos in range(L - 1, -1, -1):
                acc = _NEG_INF
                for end, pidx in by_start[pos]:
                    acc = _logaddexp(acc, B[end] + lp[pidx])
                B[pos] = acc
            Z = F[L]
            if Z == _NEG_INF:
                raise ValueError("estimation lattice lost character coverage")
            for start, end, pidx in flat:
                counts[pidx] += mult * math.exp(F[start] + lp[pidx] + B[end] - Z)
            ll += mult * Z
        lls.append(ll)
        total = math.fsum(counts)
        cur = [max(c / total, _PROB_FLOOR) for c in counts]
    out_probs = dict(zip(pieces, cur))
    out_counts = dict(zip(pieces, counts))
    return out_probs, out_counts, lls


def _prune_losses(probs, counts, multi_pieces, max_piece_len):
    """Estimated corpus log-likelihood drop from re-segmenting each piece's surface."""
    lp = {p: math.log(v) for p, v in probs.items()}
    losses = {}
    for piece in multi_pieces:
        alt = _best_alt_score(piece, lp, piece, max_piece_len)
        losses[piece] = counts[piece] * (lp[piece] - alt)
    return losses


def _best_alt_score(surface: str, lp: dict[str, float], exclude: str, max_piece_len: int) -> float:
    # viterbi over the surface with `exclude` removed; characters keep it feasible
    L = len(surface)
    best = [_NEG_INF] * (L + 1)
    best[0] = 0.0
    for end in range(1, L + 1):
        b = _NEG_INF
        for start in range(max(0, end - max_piece_len), end):
            if best[start] == _NEG_INF:
                continue
            sub = surface[start:end]
            if sub == exclude:
                continue
            w = lp.get(sub)
            if w is not None and best[start] + w > b:
                b = best[start] + w
        best[end] = b
    return best[L]


def corpus_log_likelihood(corpus: Sequence[str], vocab: Vocabulary) -> float:
    """Sum over non-empty lines of the log summed segmentation weight."""
    total = 0.0
    for s in corpus:
        if s:
            total += build_lattice(s, vocab).log_partition(1.0)
    return total
