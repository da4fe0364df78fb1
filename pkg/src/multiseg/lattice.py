"""Segmentation lattice over a raw string plus the DP routines that run on it.

The lattice is a DAG whose nodes are character boundaries 0..S and whose
edges are vocabulary pieces matching the covered substring. All scores are
log-space; sums over paths use log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .vocab import UNK, Vocabulary

_NEG_INF = float("-inf")


def _logaddexp(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == _NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


@dataclass(frozen=True)
class Edge:
    start: int
    end: int
    piece_id: int
    log_prob: float


@dataclass(frozen=True)
class Segmentation:
    """One path through a lattice: piece ids, the raw string, summed log-weight."""

    token_ids: tuple[int, ...]
    raw: str
    log_weight: float

    def __len__(self) -> int:
        return len(self.token_ids)

    def surfaces(self, vocab: Vocabulary) -> list[str]:
        return [vocab.surface(t) for t in self.token_ids]


class Lattice:
    """Immutable segmentation lattice for one string under one vocabulary."""

    def __init__(self, raw: str, vocab: Vocabulary, edges: Sequence[Edge]):
        self.raw = raw
        self.vocab = vocab
        self.num_chars = len(raw)
        self.edges: tuple[Edge, ...] = tuple(edges)
        starts: list[list[Edge]] = [[] for _ in range(self.num_chars + 1)]
        ends: list[list[Edge]] = [[] for _ in range(self.num_chars + 1)]
        for e in self.edges:
            starts[e.start].append(e)
            ends[e.end].append(e)
        self._starts = starts
        self._ends = ends
        self._edge_set = {(e.start, e.end, e.piece_id) for e in self.edges}
        self._forward_cache: dict[float, list[float]] = {}

    # -- exact DP ----------------------------------------------------------

    def viterbi(self) -> Segmentation:
        """Highest log-weight segmentation.

        Ties resolve to fewer tokens, then the ascending piece-id sequence.
        """
        best = self._best_suffixes(1)
        score, _count, ids = best[0][0]
        return Segmentation(token_ids=ids, raw=self.raw, log_weight=score)

    def nbest(self, n: int) -> list[Segmentation]:
        """Top n segmentations under the viterbi ordering; fewer if the lattice is smaller."""
        if n < 1:
            raise ValueError("n must be >= 1")
        best = self._best_suffixes(n)
        return [Segmentation(token_ids=ids, raw=self.raw, log_weight=score)
                for score, _count, ids in best[0]]

    def _best_suffixes(self, n: int):
        # best[pos] holds up to n (score, token_count, id_tuple) entries for raw[pos:],
        # ordered by (-score, count, ids). Suffix-decomposable, so plain DP is exact.
        S = self.num_chars
        best: list[list[tuple[float, int, tuple[int, ...]]] | None] = [None] * (S + 1)
        best[S] = [(0.0, 0, ())]
        for pos in range(S - 1, -1, -1):
            cands = []
            for e in self._starts[pos]:
                tails = best[e.end]
                if not tails:
                    continue
                for score, count, ids in tails:
                    cands.append((e.log_prob + score, count + 1, (e.piece_id,) + ids))
            if not cands:
                raise ValueError(f"no segmentation covers position {pos} of {self.raw!r}")
            cands.sort(key=lambda t: (-t[0], t[1], t[2]))
            best[pos] = cands[:n]
        return best

    # -- path weights ------------------------------------------------------

    def forward_scores(self, alpha: float) -> list[float]:
        """log sum over partial paths into each node, edge weights scaled by alpha."""
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        cached = self._forward_cache.get(alpha)
        if cached is not None:
            return cached
        S = self.num_chars
        F = [_NEG_INF] * (S + 1)
        F[0] = 0.0
        for pos in range(1, S + 1):
            acc = _NEG_INF
            for e in self._ends[pos]:
                acc = _logaddexp(acc, F[e.start] + alpha * e.log_prob)
            F[pos] = acc
        if F[S] == _NEG_INF:
            raise ValueError(f"lattice for {self.raw!r} has no complete path")
        self._forward_cache[alpha] = F
        return F

    def log_partition(self, alpha: float = 1.0) -> float:
        """log of the summed alpha-scaled weight over all complete segmentations."""
        return self.forward_scores(alpha)[self.num_chars]

    def sample(self, alpha: float, rng: np.random.Generator) -> Segmentation:
        """Draw one segmentation with probability weight^alpha / partition.

        alpha = 0 is uniform over segmentations; large alpha concentrates on
        the viterbi path. Exact: forward filtering then backward sampling.
        """
        F = self.forward_scores(alpha)
        pos = self.num_chars
        rev: list[Edge] = []
        while pos > 0:
            incoming = self._ends[pos]
            logits = [F[e.start] + alpha * e.log_prob - F[pos] for e in incoming]
            probs = [math.exp(l) for l in logits]
            u = rng.random() * math.fsum(probs)
            acc = 0.0
            chosen = incoming[-1]
            for e, p in zip(incoming, probs):
                acc += p
                if u < acc:
                    chosen = e
                    break
            rev.append(chosen)
            pos = chosen.start
        rev.reverse()
        ids = tuple(e.piece_id for e in rev)
        weight = math.fsum(e.log_prob for e in rev)
        return Segmentation(token_ids=ids, raw=self.raw, log_weight=weight)

    def log_prob(self, seg: Segmentation, alpha: float = 1.0) -> float:
        """log P_alpha(seg) = alpha * log_weight - log partition. seg must realize raw."""
        self._check_realizes(seg)
        return alpha * seg.log_weight - self.log_partition(alpha)

    def _check_realizes(self, seg: Segmentation) -> None:
        pos = 0
        for tid in seg.token_ids:
            width = 1 if tid == UNK else len(self.vocab.surface(tid))
            if (pos, pos + width, tid) not in self._edge_set:
                raise ValueError(
                    f"segmentation {seg.token_ids} does not realize {self.raw!r} at {pos}")
            pos += width
        if pos != self.num_chars:
            raise ValueError(
                f"segmentation {seg.token_ids} covers {pos} of {self.num_chars} chars")

    def iter_segmentations(self) -> Iterator[Segmentation]:
        """Yield every complete segmentation (exponential; for small strings only)."""
        S = self.num_chars

        def walk(pos: int, ids: tuple[int, ...], weight: float):
            if pos == S:
                yield Segmentation(token_ids=ids, raw=self.raw, log_weight=weight)
                return
            for e in self._starts[pos]:
                yield from walk(e.end, ids + (e.piece_id,), weight + e.log_prob)

        yield from walk(0, (), 0.0)


def build_lattice(raw: str, vocab: Vocabulary) -> Lattice:
    """Edges for every vocabulary piece matching a substring of raw.

    A character with no single-character piece gets a length-1 <unk> edge, so
    every string is segmentable.
    """
    if not raw:
        raise ValueError("cannot build a lattice for an empty string")
    S = len(raw)
    max_len = vocab.max_piece_len
    edges: list[Edge] = []
    for start in range(S):
        covered_char = False
        for end in range(start + 1, min(start + max_len, S) + 1):
            pid = vocab.piece_id(raw[start:end])
            if pid is not None and pid >= 4:
                edges.append(Edge(start, end, pid, vocab.log_prob(pid)))
                if end == start + 1:
                    covered_char = True
        if not covered_char:
            edges.append(Edge(start, start + 1, UNK, vocab.log_prob(UNK)))
    return Lattice(raw, vocab, edges)


# Functional aliases mirroring the library's operation names.

def viterbi(lattice: Lattice) -> Segmentation:
    return lattice.viterbi()


def nbest(lattice: Lattice, n: int) -> list[Segmentation]:
    return lattice.nbest(n)


def sample_segmentation(lattice: Lattice, alpha: float, rng: np.random.Generator) -> Segmentation:
    return lattice.sample(alpha, rng)


def segmentation_log_prob(lattice: Lattice, seg: Segmentation, alpha: float = 1.0) -> float:
    return lattice.log_prob(seg, alpha)
