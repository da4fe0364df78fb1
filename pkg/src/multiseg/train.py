"""Training: segmentation-aware batching, Adam with warmup, dev-loss model selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import models
from .lattice import Lattice, build_lattice
from .models import Batch, NeuralModel
from .vocab import BOS, EOS, PAD, Vocabulary

TRAIN_MODES = ("vanilla", "subword_reg")


@dataclass
class TrainConfig:
    """Optimization settings. vanilla trains on viterbi segmentations; subword_reg
    redraws temperature-alpha samples of both sides for every batch."""

    mode: str
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    alpha: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    grad_clip_norm: float | None = 5.0
    warmup_steps: int = 100
    label_smoothing: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"unknown training mode {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive or None")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")


@dataclass
class ParallelCorpus:
    """Aligned raw sentence pairs with a split tag."""

    pairs: list[tuple[str, str]]
    split: str = "train"

    def __post_init__(self):
        if self.split not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {self.split!r}")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class TrainResult:
    model: NeuralModel
    history: list[dict]
    best_epoch: int
    best_dev_loss: float


class SegmentationCache:
    """Lattices built once per distinct sentence; viterbi ids memoized."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._lattices: dict[str, Lattice] = {}
        self._viterbi: dict[str, tuple[int, ...]] = {}

    def lattice(self, raw: str) -> Lattice:
        lat = self._lattices.get(raw)
        if lat is None:
            lat = build_lattice(raw, self.vocab)
            self._lattices[raw] = lat
        return lat

    def viterbi_ids(self, raw: str) -> tuple[int, ...]:
        ids = self._viterbi.get(raw)
        if ids is None:
            ids = self.lattice(raw).viterbi().token_ids
            self._viterbi[raw] = ids
        return ids

    def sample_ids(self, raw: str, alpha: float, rng: np.random.Generator) -> tuple[int, ...]:
        return self.lattice(raw).sample(alpha, rng).token_ids


def make_batch(pairs: Sequence[tuple[str, str]], vocab_src: Vocabulary,
               vocab_tgt: Vocabulary, mode: str, alpha: float,
               rng: np.random.Generator | None,
               caches: tuple[SegmentationCache, SegmentationCache] | None = None) -> Batch:
    """Segment and pad one batch. Targets are framed BOS ... EOS; sources are not."""
    if mode not in TRAIN_MODES:
        raise ValueError(f"unknown training mode {mode!r}")
    if not pairs:
        raise ValueError("empty batch")
    if mode == "subword_reg" and rng is None:
        raise ValueError("subword_reg batching needs an rng")
    if caches is None:
        caches = (SegmentationCache(vocab_src), SegmentationCache(vocab_tgt))
    src_cache, tgt_cache = caches
    src_ids: list[tuple[int, ...]] = []
    tgt_ids: list[tuple[int, ...]] = []
    for i, (s, t) in enumerate(pairs):
        if not s or not t:
            raise ValueError(f"pair {i} has an empty side")
        if mode == "vanilla":
            src_ids.append(src_cache.viterbi_ids(s))
            tgt_ids.append(tgt_cache.viterbi_ids(t))
        else:
            src_ids.append(src_cache.sample_ids(s, alpha, rng))
            tgt_ids.append(tgt_cache.sample_ids(t, alpha, rng))
    B = len(pairs)
    S = max(len(x) for x in src_ids)
    T = max(len(x) for x in tgt_ids) + 1  # room for the EOS / shifted BOS
    src = np.full((B, S), PAD, dtype=np.int64)
    src_mask = np.zeros((B, S), dtype=np.float64)
    tgt_in = np.full((B, T), PAD, dtype=np.int64)
    tgt_out = np.full((B, T), PAD, dtype=np.int64)
    tgt_mask = np.zeros((B, T), dtype=np.float64)
    for i, (sids, tids) in enumerate(zip(src_ids, tgt_ids)):
        src[i, :len(sids)] = sids
        src_mask[i, :len(sids)] = 1.0
        row_in = (BOS,) + tids
        row_out = tids + (EOS,)
        tgt_in[i, :len(row_in)] = row_in
        tgt_out[i, :len(row_out)] = row_out
        tgt_mask[i, :len(row_out)] = 1.0
    return Batch(src=src, src_mask=src_mask, tgt_in=tgt_in, tgt_out=tgt_out, tgt_mask=tgt_mask)


def loss_and_gradients(model: NeuralModel, batch: Batch,
                       label_smoothing: float = 0.0) -> tuple[float, dict]:
    """Mean NLL over non-PAD target positions plus analytic gradients."""
    return models.training_loss_and_gradients(model, batch, label_smoothing)


def _clip_gradients(grads: dict, max_norm: float | None) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def _dev_loss(model: NeuralModel, pairs, vocab_src, vocab_tgt, config, caches) -> float:
    total, tokens = 0.0, 0.0
    for start in range(0, len(pairs), config.batch_size):
        chunk = pairs[start:start + config.batch_size]
        batch = make_batch(chunk, vocab_src, vocab_tgt, "vanilla", 0.0, None, caches)
        loss, _ = loss_and_gradients(model, batch, config.label_smoothing)
        n = float(batch.tgt_mask.sum())
        total += loss * n
        tokens += n
    return total / tokens


def train(model: NeuralModel, corpus, vocab_src: Vocabulary, vocab_tgt: Vocabulary,
          config: TrainConfig, dev=None) -> TrainResult:
    """Adam training over the corpus; returns the best-dev-loss checkpoint.

    Fully seed-deterministic: batch order comes from (seed, epoch) streams and
    subword samples from (seed, step) streams, so reruns are bitwise identical.
    Without dev pairs, per-epoch mean training loss drives model selection.
    """
    pairs = list(corpus.pairs if isinstance(corpus, ParallelCorpus) else corpus)
    dev_pairs = list(dev.pairs if isinstance(dev, ParallelCorpus) else (dev or []))
    if not pairs:
        raise ValueError("training corpus is empty")
    caches = (SegmentationCache(vocab_src), SegmentationCache(vocab_tgt))
    m_state = {k: np.zeros_like(v, dtype=np.float64) for k, v in model.params.items()}
    v_state = {k: np.zeros_like(v, dtype=np.float64) for k, v in model.params.items()}
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    step = 0
    history: list[dict] = []
    best_loss = math.inf
    best_epoch = -1
    best_params: dict[str, np.ndarray] | None = None

    for epoch in range(1, config.epochs + 1):
        order_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, epoch)))
        order = order_rng.permutation(len(pairs))
        epoch_loss, epoch_tokens = 0.0, 0.0
        for start in range(0, len(pairs), config.batch_size):
            chunk = [pairs[i] for i in order[start:start + config.batch_size]]
            batch_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2, step)))
            batch = make_batch(chunk, vocab_src, vocab_tgt, config.mode,
                               config.alpha, batch_rng, caches)
            try:
                loss, grads = loss_and_gradients(model, batch, config.label_smoothing)
            except FloatingPointError as e:
                raise FloatingPointError(
                    f"divergence at epoch {epoch} batch {start // config.batch_size + 1}: {e}") from e
            _clip_gradients(grads, config.grad_clip_norm)
            step += 1
            if config.warmup_steps > 0:
                lr = config.learning_rate * min(1.0, step / config.warmup_steps)
            else:
                lr = config.learning_rate
            bc1 = 1.0 - b1 ** step
            bc2 = 1.0 - b2 ** step
            for name, p in model.params.items():
                g = grads[name]
                m_state[name] = b1 * m_state[name] + (1.0 - b1) * g
                v_state[name] = b2 * v_state[name] + (1.0 - b2) * (g * g)
                upd = lr * (m_state[name] / bc1) / (np.sqrt(v_state[name] / bc2) + eps)
                p64 = p.astype(np.float64) - upd
                with np.errstate(over="ignore"):  # overflow caught just below
                    model.params[name] = p64.astype(np.float32)
                if not np.isfinite(model.params[name]).all():
                    raise FloatingPointError(
                        f"non-finite parameter {name} at epoch {epoch} "
                        f"batch {start // config.batch_size + 1}")
            n = float(batch.tgt_mask.sum())
            epoch_loss += loss * n
            epoch_tokens += n
        train_loss = epoch_loss / epoch_tokens
        if dev_pairs:
            dev_loss = _dev_loss(model, dev_pairs, vocab_src, vocab_tgt, config, caches)
        else:
            dev_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
        if dev_loss < best_loss:
            best_loss = dev_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}

    if best_params is not None:
        model.params = best_params
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_dev_loss=best_loss)
