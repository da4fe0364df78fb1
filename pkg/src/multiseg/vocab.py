"""Subword vocabulary: reserved symbols, unigram log-probabilities, TSV persistence."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_SURFACES = ("<pad>", "<s>", "</s>", "<unk>")
UNK_LOG_PROB = math.log(1e-6)
_RESERVED_LOG_PROBS = (0.0, 0.0, 0.0, UNK_LOG_PROB)

NORMALIZATION_TOL = 1e-6


class Vocabulary:
    """Immutable piece inventory: ids 0..3 are <pad>, <s>, </s>, <unk>, then scored pieces.

    exp(log_prob) over the non-reserved pieces sums to one (within 1e-6).
    Reserved entries sit outside the normalization; <unk> carries a fixed
    low score so unknown characters are representable but expensive.
    """

    def __init__(self, pieces: Iterable[tuple[str, float]]):
        surfaces = list(RESERVED_SURFACES)
        log_probs = list(_RESERVED_LOG_PROBS)
        for surface, lp in pieces:
            if not isinstance(surface, str) or not surface:
                raise ValueError("piece surfaces must be non-empty strings")
            lp = float(lp)
            if not math.isfinite(lp):
                raise ValueError(f"non-finite log-prob for piece {surface!r}")
            surfaces.append(surface)
            log_probs.append(lp)
        if len(set(surfaces)) != len(surfaces):
            seen: set[str] = set()
            dup = next(s for s in surfaces if s in seen or seen.add(s))
            raise ValueError(f"duplicate piece surface {dup!r}")
        if not log_probs[4:]:
            raise ValueError("vocabulary needs at least one scored piece")
        total = math.fsum(math.exp(lp) for lp in log_probs[4:])
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"piece probabilities sum to {total!r}, expected 1")
        self._surfaces: tuple[str, ...] = tuple(surfaces)
        self._log_probs = np.asarray(log_probs, dtype=np.float64)
        self._log_probs.flags.writeable = False
        self._ids = {s: i for i, s in enumerate(surfaces)}
        self._max_piece_len = max((len(s) for s in surfaces[4:]), default=0)

    def __len__(self) -> int:
        return len(self._surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids

    @property
    def pieces(self) -> list[tuple[str, float, int]]:
        """All entries as (surface, log_prob, id), reserved first."""
        return [(s, float(self._log_probs[i]), i) for i, s in enumerate(self._surfaces)]

    @property
    def log_probs(self) -> np.ndarray:
        return self._log_probs

    @property
    def max_piece_len(self) -> int:
        return self._max_piece_len

    def surface(self, piece_id: int) -> str:
        if not 0 <= piece_id < len(self._surfaces):
            raise ValueError(f"piece id {piece_id} out of range")
        return self._surfaces[piece_id]

    def log_prob(self, piece_id: int) -> float:
        if not 0 <= piece_id < len(self._surfaces):
            raise ValueError(f"piece id {piece_id} out of range")
        return float(self._log_probs[piece_id])

    def piece_id(self, surface: str) -> int | None:
        return self._ids.get(surface)

    def save(self, path: str) -> None:
        """Write one `piece<TAB>log_prob` line per entry, reserved rows first."""
        lines = []
        for i, s in enumerate(self._surfaces):
            if "\t" in s or "\n" in s or "\r" in s:
                raise ValueError(f"piece {s!r} contains tab/newline, not representable")
            lines.append(f"{s}\t{self._log_probs[i]:.17g}\n")
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.writelines(lines)

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = []
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected piece<TAB>log_prob")
                try:
                    rows.append((parts[0], float(parts[1])))
                except ValueError as e:
                    raise ValueError(f"{path}:{lineno}: bad log-prob {parts[1]!r}") from e
        if len(rows) < 4 or tuple(s for s, _ in rows[:4]) != RESERVED_SURFACES:
            raise ValueError(f"{path}: first four rows must be {RESERVED_SURFACES}")
        return cls(rows[4:])


def decode_pieces(token_ids: Sequence[int], vocab: Vocabulary) -> str:
    """Concatenate piece surfaces, dropping reserved ids (pad/BOS/EOS/unk)."""
    out = []
    for tid in token_ids:
        tid = int(tid)
        if not 0 <= tid < len(vocab):
            raise ValueError(f"token id {tid} out of range for vocabulary of {len(vocab)}")
        if tid >= 4:
            out.append(vocab.surface(tid))
    return "".join(out)
