"""Decoding strategies over one or more (model, segmentation) scoring contexts.

A context is a (scorer, encoded source) pair; beam search maximizes the sum of
per-context log-probabilities of the output. Strategies differ only in which
contexts they assemble: the single best segmentation, several sampled ones,
several models, or the full cross product.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Lattice, Segmentation, build_lattice
from .models import EncodedSource
from .vocab import BOS, EOS, PAD, Vocabulary, decode_pieces

STRATEGY_KINDS = (
    "single_best",
    "nbest_decoding",
    "proposed",
    "model_ensemble",
    "proposed_plus_ensemble",
)


@dataclass(frozen=True)
class DecodeStrategy:
    """What to decode with: strategy kind plus its knobs.

    n counts segmentations (the first is always the viterbi one) or n-best
    candidates; alpha is the sampling temperature; max_len None means
    2 * source-token-count + 8. Final ranking uses score / length^power with
    ties broken by ascending token ids.
    """

    kind: str
    n: int = 5
    alpha: float = 0.2
    beam_width: int = 4
    max_len: int | None = None
    length_norm_power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.length_norm_power < 0:
            raise ValueError("length_norm_power must be >= 0")


@dataclass
class Hypothesis:
    """One beam entry: generated tokens (no BOS), summed context score, finished flag."""

    tokens: tuple[int, ...]
    score: float
    finished: bool = False


@dataclass
class DecodeResult:
    """Finished translation: surface string, ids (with EOS), scores, inputs used.

    candidates is populated by nbest decoding only: the per-candidate results
    the winner was chosen from, in candidate rank order.
    """

    output: str
    token_ids: tuple[int, ...]
    score: float
    normalized_score: float
    segmentations: list[Segmentation]
    elapsed: float
    candidates: list["DecodeResult"] | None = None


def prepare_inputs(raw_src: str, vocab: Vocabulary, strategy: DecodeStrategy,
                   rng: np.random.Generator) -> list[Segmentation]:
    """The viterbi segmentation plus n-1 temperature-alpha samples (duplicates kept)."""
    return _inputs_from_lattice(build_lattice(raw_src, vocab), strategy, rng)


def _inputs_from_lattice(lat: Lattice, strategy: DecodeStrategy,
                         rng: np.random.Generator) -> list[Segmentation]:
    segs = [lat.viterbi()]
    for _ in range(strategy.n - 1):
        segs.append(lat.sample(strategy.alpha, rng))
    return segs


def beam_search_multi(contexts: Sequence[tuple[object, EncodedSource]],
                      strategy: DecodeStrategy,
                      vocab_tgt: Vocabulary) -> DecodeResult:
    """Beam search maximizing the summed log-prob across all contexts.

    Hypotheses finish on EOS and are frozen; a hypothesis still open at
    max_len is closed by forcing EOS. The search stops early once no open
    hypothesis can beat the best finished normalized score.
    """
    t0 = time.perf_counter()
    if not contexts:
        raise ValueError("beam search needs at least one context")
    vsize = contexts[0][0].tgt_vocab_size
    for scorer, _ in contexts:
        if scorer.tgt_vocab_size != vsize:
            raise ValueError("all contexts must share one target vocabulary")
    if len(vocab_tgt) != vsize:
        raise ValueError(
            f"target vocabulary has {len(vocab_tgt)} entries, scorers expect {vsize}")
    max_len = strategy.max_len
    if max_len is None:
        max_len = max(2 * len(enc.src_ids) + 8 for _, enc in contexts)
    power = strategy.length_norm_power

    # consume BOS once; `pending` holds summed next-token log-probs per beam row
    states = []
    pending = np.zeros((1, vsize), dtype=np.float64)
    for scorer, enc in contexts:
        st = scorer.init_states(enc, 1)
        st, logp = scorer.advance(enc, st, np.asarray([BOS]))
        states.append(st)
        pending = pending + logp
    beam_tokens: list[tuple[int, ...]] = [()]
    beam_scores: list[float] = [0.0]
    finished: list[Hypothesis] = []

    for step in range(1, max_len + 1):
        cands: list[tuple[float, tuple[int, ...], int, int]] = []
        for i, toks in enumerate(beam_tokens):
            row = pending[i].copy()
            row[PAD] = -np.inf
            row[BOS] = -np.inf
            if step == max_len:
                keep = row[EOS]
                row[:] = -np.inf
                row[EOS] = keep
            for tok in np.flatnonzero(row > -np.inf):
                tok = int(tok)
                cands.append((beam_scores[i] + float(row[tok]), toks + (tok,), i, tok))
        cands.sort(key=lambda c: (-c[0], c[1]))
        next_tokens: list[tuple[int, ...]] = []
        next_scores: list[float] = []
        parents: list[int] = []
        steps_taken: list[int] = []
        for score, toks, parent, tok in cands[:strategy.beam_width]:
            if tok == EOS:
                finished.append(Hypothesis(tokens=toks, score=score, finished=True))
            else:
                next_tokens.append(toks)
                next_scores.append(score)
                parents.append(parent)
                steps_taken.append(tok)
        if not next_tokens:
            break
        if finished:
            best_fin = max(h.score / len(h.tokens) ** power for h in finished)
            bound = max(s / max_len ** power for s in next_scores)
            if bound < best_fin:
                break
        pending = np.zeros((len(next_tokens), vsize), dtype=np.float64)
        tok_arr = np.asarray(steps_taken)
        for ci, (scorer, enc) in enumerate(contexts):
            sel = scorer.select_states(states[ci], parents)
            states[ci], logp = scorer.advance(enc, sel, tok_arr)
            pending = pending + logp
        beam_tokens = next_tokens
        beam_scores = next_scores

    if not finished:
        raise RuntimeError("beam search found no finishable hypothesis")
    finished.sort(key=lambda h: (-(h.score / len(h.tokens) ** power), h.tokens))
    score, tokens = finished[0].score, finished[0].tokens
    segs = [enc.segmentation for _, enc in contexts if enc.segmentation is not None]
    return DecodeResult(
        output=decode_pieces(tokens, vocab_tgt),
        token_ids=tokens,
        score=score,
        normalized_score=score / len(tokens) ** power,
        segmentations=segs,
        elapsed=time.perf_counter() - t0,
    )


def translate(raw_src: str, models: Sequence[object], vocab_src: Vocabulary,
              vocab_tgt: Vocabulary, strategy: DecodeStrategy,
              rng: np.random.Generator | None = None) -> DecodeResult:
    """Translate one raw string under the given strategy.

    models[0] is the primary model; the ensemble kinds use all of them. The
    rng drives segmentation sampling only; None derives one from strategy.seed.
    """
    t0 = time.perf_counter()
    models = list(models)
    if not models:
        raise ValueError("translate needs at least one model")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(strategy.seed))
    lat = build_lattice(raw_src, vocab_src)
    kind = strategy.kind

    if kind == "nbest_decoding":
        results = []
        for seg in lat.nbest(strategy.n):
            contexts = [(m, m.encode(seg)) for m in models]
            results.append(beam_search_multi(contexts, strategy, vocab_tgt))
        best = results[0]
        for res in results[1:]:
            if res.normalized_score > best.normalized_score or (
                    res.normalized_score == best.normalized_score
                    and res.token_ids < best.token_ids):
                best = res
        best.candidates = results
        best.elapsed = time.perf_counter() - t0
        return best

    if kind == "single_best":
        segs = [lat.viterbi()]
        pairs = [(models[0], segs[0])]
    elif kind == "proposed":
        segs = _inputs_from_lattice(lat, strategy, rng)
        pairs = [(models[0], s) for s in segs]
    elif kind == "model_ensemble":
        segs = [lat.viterbi()]
        pairs = [(m, segs[0]) for m in models]
    elif kind == "proposed_plus_ensemble":
        segs = _inputs_from_lattice(lat, strategy, rng)
        pairs = [(m, s) for m in models for s in segs]
    else:  # pragma: no cover - guarded by DecodeStrategy
        raise ValueError(f"unknown strategy kind {kind!r}")

    contexts = [(m, m.encode(s)) for m, s in pairs]
    res = beam_search_multi(contexts, strategy, vocab_tgt)
    res.elapsed = time.perf_counter() - t0
    return res


def batch_translate(raw_srcs: Sequence[str], models: Sequence[object],
                    vocab_src: Vocabulary, vocab_tgt: Vocabulary,
                    strategy: DecodeStrategy, threads: int = 1) -> list[DecodeResult]:
    """Translate many strings; output order matches input order.

    Each sentence gets an rng stream derived from (strategy.seed, index), so
    results do not depend on threading. Errors carry the sentence index.
    """
    def one(i: int, raw: str) -> DecodeResult:
        rng = np.random.default_rng(np.random.SeedSequence(strategy.seed, spawn_key=(i,)))
        try:
            return translate(raw, models, vocab_src, vocab_tgt, strategy, rng)
        except Exception as e:
            raise RuntimeError(f"sentence {i}: {e}") from e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(raw_srcs)), raw_srcs))
    return [one(i, raw) for i, raw in enumerate(raw_srcs)]
