"""Deterministic synthetic transduction task for end-to-end experiments.

Sentences are sequences of lexicon words. The reference applies a word-level
substitution table and a local reordering rule; the source string randomly
loses some word boundaries, so recovering words from characters is the hard
part the subword models must absorb.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .train import ParallelCorpus


@dataclass(frozen=True)
class SyntheticTask:
    """Generator settings; everything downstream is a pure function of these."""

    seed: int = 0
    src_alphabet: str = "abcdefgh"
    tgt_alphabet: str = "mnopqrst"
    lexicon_size: int = 40
    word_len_min: int = 2
    word_len_max: int = 5
    sent_len_min: int = 3
    sent_len_max: int = 8
    boundary_drop_rate: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.boundary_drop_rate <= 1.0:
            raise ValueError("boundary_drop_rate must be in [0, 1]")
        if self.lexicon_size < 2:
            raise ValueError("lexicon needs at least two words")
        if self.word_len_min < 1 or self.word_len_max < self.word_len_min:
            raise ValueError("bad word length bounds")
        if self.sent_len_min < 1 or self.sent_len_max < self.sent_len_min:
            raise ValueError("bad sentence length bounds")

    @cached_property
    def lexicon(self) -> tuple[str, ...]:
        """Prefix-free source words, so any concatenation parses uniquely."""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0,)))
        words: list[str] = []
        alphabet = list(self.src_alphabet)
        guard = 0
        while len(words) < self.lexicon_size:
            guard += 1
            if guard > 100000:
                raise ValueError("could not build a prefix-free lexicon; "
                                 "shrink lexicon_size or widen the alphabet")
            length = int(rng.integers(self.word_len_min, self.word_len_max + 1))
            w = "".join(rng.choice(alphabet) for _ in range(length))
            if any(w.startswith(v) or v.startswith(w) for v in words):
                continue
            words.append(w)
        return tuple(words)

    @cached_property
    def translations(self) -> tuple[str, ...]:
        """Target word per lexicon entry; unrelated surfaces, all distinct."""
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(1,)))
        alphabet = list(self.tgt_alphabet)
        out: list[str] = []
        seen: set[str] = set()
        while len(out) < self.lexicon_size:
            length = int(rng.integers(self.word_len_min, self.word_len_max + 1))
            w = "".join(rng.choice(alphabet) for _ in range(length))
            if w in seen:
                continue
            seen.add(w)
            out.append(w)
        return tuple(out)

    def parse_words(self, source_raw: str) -> list[int]:
        """Recover lexicon indices from a (possibly boundary-dropped) source string."""
        by_prefix: dict[str, int] = {w: i for i, w in enumerate(self.lexicon)}
        indices: list[int] = []
        for chunk in source_raw.split(" "):
            if not chunk:
                raise ValueError(f"empty chunk in {source_raw!r}")
            pos = 0
            while pos < len(chunk):
                hit = None
                for w, i in by_prefix.items():
                    if chunk.startswith(w, pos):
                        hit = (w, i)
                        break
                if hit is None:
                    raise ValueError(f"cannot parse {chunk!r} at {pos}")
                indices.append(hit[1])
                pos += len(hit[0])
        return indices

    def transduce(self, source_raw: str) -> str:
        """The reference for any well-formed source string: substitute, then
        swap adjacent translations wherever the left word has the larger
        lexicon index."""
        return self._render_target(self.parse_words(source_raw))

    def _render_target(self, indices: list[int]) -> str:
        out = [self.translations[i] for i in indices]
        for i in range(0, len(indices) - 1, 2):
            if indices[i] > indices[i + 1]:
                out[i], out[i + 1] = out[i + 1], out[i]
        return " ".join(out)


@dataclass
class TaskData:
    """The generated corpus: 80/10/10 split plus the task that made it."""

    task: SyntheticTask
    train: ParallelCorpus
    dev: ParallelCorpus
    test: ParallelCorpus


def generate_task(task: SyntheticTask, n_pairs: int) -> TaskData:
    """Sample n_pairs pairs and split them 80/10/10, deterministically per seed."""
    if n_pairs < 10:
        raise ValueError("n_pairs must be >= 10 to fill all three splits")
    rng = np.random.default_rng(np.random.SeedSequence(task.seed, spawn_key=(2,)))
    lex_n = task.lexicon_size
    # mildly skewed word frequencies so pieces see realistic imbalance
    weights = 1.0 / np.sqrt(np.arange(1, lex_n + 1, dtype=np.float64))
    weights /= weights.sum()
    pairs: list[tuple[str, str]] = []
    for _ in range(n_pairs):
        length = int(rng.integers(task.sent_len_min, task.sent_len_max + 1))
        indices = [int(i) for i in rng.choice(lex_n, size=length, p=weights)]
        words = [task.lexicon[i] for i in indices]
        seps = [" " if rng.random() >= task.boundary_drop_rate else ""
                for _ in range(length - 1)]
        src = words[0] + "".join(s + w for s, w in zip(seps, words[1:]))
        pairs.append((src, task._render_target(indices)))
    n_train = int(n_pairs * 0.8)
    n_dev = int(n_pairs * 0.1)
    return TaskData(
        task=task,
        train=ParallelCorpus(pairs[:n_train], "train"),
        dev=ParallelCorpus(pairs[n_train:n_train + n_dev], "dev"),
        test=ParallelCorpus(pairs[n_train + n_dev:], "test"),
    )
