"""Sequence scorers over piece ids: a small attention seq2seq with hand-written
gradients, and an exact lookup-table scorer for tests and oracles.

Both expose the same stepping protocol: encode -> init_states -> advance, plus
a pure step(enc, prefix) that replays a prefix from scratch. Parameters are
stored float32; all arithmetic runs in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Segmentation
from .vocab import BOS, EOS, PAD

CHECKPOINT_MAGIC = b"SGE1"


@dataclass
class EncodedSource:
    """Encoder output for one source segmentation."""

    src_ids: tuple[int, ...]
    segmentation: Segmentation | None = None
    outputs: np.ndarray | None = None      # (S, H) float64
    final_state: np.ndarray | None = None  # (H,) float64


@dataclass
class Batch:
    """Padded id matrices for one training step; masks are 1.0 where real."""

    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax_masked(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # mask is 1.0 where attendable; masked entries get exactly zero weight
    neg = np.where(mask > 0, scores, -np.inf)
    shifted = neg - neg.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def _as_ids(src) -> tuple[int, ...]:
    if isinstance(src, Segmentation):
        return tuple(int(t) for t in src.token_ids)
    return tuple(int(t) for t in src)


class NeuralModel:
    """Single-layer GRU encoder/decoder with dot-product attention.

    emb_dim embeddings feed hidden_dim GRUs; the decoder state queries the
    encoder outputs by dot product and a tanh read-out projects to the target
    vocabulary. Default init is uniform(-0.08, 0.08) from the given seed;
    zero_init gives the exactly-uniform output distribution.
    """

    def __init__(self, src_vocab_size: int, tgt_vocab_size: int,
                 emb_dim: int = 64, hidden_dim: int = 128,
                 seed: int = 0, zero_init: bool = False):
        if src_vocab_size < 5 or tgt_vocab_size < 5:
            raise ValueError("vocab sizes must cover the four reserved ids")
        self.emb_dim = emb_dim
        self.hidden_dim = hidden_dim
        shapes = _param_shapes(src_vocab_size, tgt_vocab_size, emb_dim, hidden_dim)
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            if zero_init:
                self.params[name] = np.zeros(shape, dtype=np.float32)
            else:
                self.params[name] = rng.uniform(-0.08, 0.08, size=shape).astype(np.float32)

    @property
    def src_vocab_size(self) -> int:
        return self.params["src_emb"].shape[0]

    @property
    def tgt_vocab_size(self) -> int:
        return self.params["tgt_emb"].shape[0]

    def _p64(self) -> dict[str, np.ndarray]:
        return {k: v.astype(np.float64) for k, v in self.params.items()}

    # -- encoding ------------------------------------------------------------

    def encode(self, src) -> EncodedSource:
        """Run the encoder over one source segmentation. Deterministic and pure."""
        ids = _as_ids(src)
        if not ids:
            raise ValueError("cannot encode an empty source")
        if any(not 0 <= t < self.src_vocab_size for t in ids):
            raise ValueError("source id out of range")
        p = self._p64()
        src_arr = np.asarray(ids, dtype=np.int64)[None, :]
        mask = np.ones_like(src_arr, dtype=np.float64)
        outs, _, _ = _encode_forward(p, src_arr, mask)
        seg = src if isinstance(src, Segmentation) else None
        return EncodedSource(src_ids=ids, segmentation=seg,
                             outputs=outs[0], final_state=outs[0, -1].copy())

    # -- incremental decoding --------------------------------------------------

    def init_states(self, enc: EncodedSource, k: int) -> np.ndarray:
        return np.tile(enc.final_state, (k, 1))

    def select_states(self, states: np.ndarray, idx: Sequence[int]) -> np.ndarray:
        return states[np.asarray(idx, dtype=np.int64)]

    def advance(self, enc: EncodedSource, states: np.ndarray, tokens) -> tuple[np.ndarray, np.ndarray]:
        """Consume one token per row; return (new_states, next-token log-probs)."""
        p = self._p64()
        toks = np.asarray(tokens, dtype=np.int64)
        x = p["tgt_emb"][toks]
        s_new, _ = _gru_forward(p, "dec_", x, states)
        scores = s_new @ enc.outputs.T
        a = _softmax_masked(scores, np.ones(scores.shape, dtype=np.float64))
        c = a @ enc.outputs
        cat = np.concatenate([s_new, c], axis=1)
        o = np.tanh(cat @ p["out_Wc"] + p["out_bc"])
        logits = o @ p["out_W"] + p["out_b"]
        return s_new, _log_softmax(logits)

    def step(self, enc: EncodedSource, prefix) -> np.ndarray:
        return step_scores(self, enc, prefix)

    def sequence_log_prob(self, src, tgt) -> float:
        return sequence_log_prob(self, src, tgt)


class LookupModel:
    """Exact conditional table: (source ids, prefix ids) -> next-token distribution.

    Contexts missing from the table fall back to `default` (uniform when None).
    Every distribution must sum to one within 1e-9; unlisted tokens inside a
    distribution have probability zero.
    """

    def __init__(self, tgt_vocab_size: int,
                 table: dict | None = None,
                 default: dict[int, float] | None = None):
        if tgt_vocab_size < 5:
            raise ValueError("vocab sizes must cover the four reserved ids")
        self.tgt_vocab_size = int(tgt_vocab_size)
        self.table: dict[tuple[tuple[int, ...], tuple[int, ...]], dict[int, float]] = {}
        for (src, prefix), dist in (table or {}).items():
            key = (tuple(int(t) for t in src), tuple(int(t) for t in prefix))
            self.table[key] = self._check_dist(dist)
        self.default = self._check_dist(default) if default is not None else None

    def _check_dist(self, dist: dict[int, float]) -> dict[int, float]:
        clean = {}
        for tok, prob in dist.items():
            tok = int(tok)
            if not 0 <= tok < self.tgt_vocab_size:
                raise ValueError(f"token id {tok} out of range")
            if prob < 0:
                raise ValueError("probabilities must be non-negative")
            clean[tok] = float(prob)
        total = math.fsum(clean.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"distribution sums to {total!r}, expected 1")
        return clean

    def _row(self, src_ids: tuple[int, ...], prefix: tuple[int, ...]) -> np.ndarray:
        dist = self.table.get((src_ids, prefix))
        row = np.full(self.tgt_vocab_size, -np.inf, dtype=np.float64)
        if dist is None and self.default is None:
            row[:] = -math.log(self.tgt_vocab_size)
            return row
        if dist is None:
            dist = self.default
        for tok, prob in dist.items():
            row[tok] = math.log(prob) if prob > 0 else -np.inf
        return row

    def encode(self, src) -> EncodedSource:
        ids = _as_ids(src)
        if not ids:
            raise ValueError("cannot encode an empty source")
        seg = src if isinstance(src, Segmentation) else None
        return EncodedSource(src_ids=ids, segmentation=seg)

    def init_states(self, enc: EncodedSource, k: int) -> list[tuple[int, ...]]:
        return [()] * k

    def select_states(self, states, idx):
        return [states[i] for i in idx]

    def advance(self, enc: EncodedSource, states, tokens):
        new_states = [st + (int(t),) for st, t in zip(states, tokens)]
        rows = np.stack([self._row(enc.src_ids, st) for st in new_states])
        return new_states, rows

    def step(self, enc: EncodedSource, prefix) -> np.ndarray:
        return step_scores(self, enc, prefix)

    def sequence_log_prob(self, src, tgt) -> float:
        return sequence_log_prob(self, src, tgt)

    def save(self, path: str) -> None:
        payload = {
            "kind": "lookup",
            "tgt_vocab_size": self.tgt_vocab_size,
            "default": None if self.default is None
                       else {str(k): v for k, v in self.default.items()},
            "table": [
                {"src": list(src), "prefix": list(prefix),
                 "dist": {str(k): v for k, v in dist.items()}}
                for (src, prefix), dist in self.table.items()
            ],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "LookupModel":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("kind") != "lookup":
            raise ValueError(f"{path}: not a lookup model file")
        table = {
            (tuple(e["src"]), tuple(e["prefix"])): {int(k): v for k, v in e["dist"].items()}
            for e in payload["table"]
        }
        default = payload.get("default")
        if default is not None:
            default = {int(k): v for k, v in default.items()}
        return cls(payload["tgt_vocab_size"], table, default)


def step_scores(scorer, enc: EncodedSource, prefix) -> np.ndarray:
    """Next-token log-probs after a prefix. Pure: replays from the start."""
    toks = [int(t) for t in prefix]
    if not toks or toks[0] != BOS:
        raise ValueError("prefix must start with BOS")
    states = scorer.init_states(enc, 1)
    logp = None
    for tok in toks:
        states, logp = scorer.advance(enc, states, np.asarray([tok]))
    return logp[0]


def sequence_log_prob(scorer, src, tgt) -> float:
    """log P(tgt | src): the target is framed BOS ... EOS internally.

    tgt may already carry the leading BOS and/or trailing EOS; missing frame
    tokens are supplied.
    """
    enc = scorer.encode(src) if not isinstance(src, EncodedSource) else src
    ids = [int(t) for t in tgt]
    if ids and ids[0] == BOS:
        ids = ids[1:]
    if not ids or ids[-1] != EOS:
        ids = ids + [EOS]
    states = scorer.init_states(enc, 1)
    total = 0.0
    cur = BOS
    for y in ids:
        states, logp = scorer.advance(enc, states, np.asarray([cur]))
        total += float(logp[0, y])
        cur = y
    return total


# -- neural internals ---------------------------------------------------------

def _param_shapes(vs: int, vt: int, d: int, h: int) -> dict[str, tuple[int, ...]]:
    return {
        "src_emb": (vs, d),
        "tgt_emb": (vt, d),
        "enc_Wx_zr": (d, 2 * h), "enc_Wh_zr": (h, 2 * h), "enc_b_zr": (2 * h,),
        "enc_Wx_n": (d, h), "enc_Wh_n": (h, h), "enc_b_n": (h,),
        "dec_Wx_zr": (d, 2 * h), "dec_Wh_zr": (h, 2 * h), "dec_b_zr": (2 * h,),
        "dec_Wx_n": (d, h), "dec_Wh_n": (h, h), "dec_b_n": (h,),
        "out_Wc": (2 * h, h), "out_bc": (h,),
        "out_W": (h, vt), "out_b": (vt,),
    }


def _gru_forward(p, prefix: str, x: np.ndarray, h_prev: np.ndarray):
    h = h_prev.shape[1]
    zr = _sigmoid(x @ p[prefix + "Wx_zr"] + h_prev @ p[prefix + "Wh_zr"] + p[prefix + "b_zr"])
    z, r = zr[:, :h], zr[:, h:]
    n = np.tanh(x @ p[prefix + "Wx_n"] + (r * h_prev) @ p[prefix + "Wh_n"] + p[prefix + "b_n"])
    h_new = (1.0 - z) * n + z * h_prev
    return h_new, (z, r, n)


def _gru_backward(p, prefix: str, dh_new: np.ndarray, x: np.ndarray, h_prev: np.ndarray,
                  z: np.ndarray, r: np.ndarray, n: np.ndarray, grads: dict):
    dz = dh_new * (h_prev - n)
    dn = dh_new * (1.0 - z)
    dh_prev = dh_new * z
    da_n = dn * (1.0 - n * n)
    grads[prefix + "Wx_n"] += x.T @ da_n
    grads[prefix + "Wh_n"] += (r * h_prev).T @ da_n
    grads[prefix + "b_n"] += da_n.sum(axis=0)
    drh = da_n @ p[prefix + "Wh_n"].T
    dr = drh * h_prev
    dh_prev += drh * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    da_zr = np.concatenate([da_z, da_r], axis=1)
    grads[prefix + "Wx_zr"] += x.T @ da_zr
    grads[prefix + "Wh_zr"] += h_prev.T @ da_zr
    grads[prefix + "b_zr"] += da_zr.sum(axis=0)
    dx = da_zr @ p[prefix + "Wx_zr"].T + da_n @ p[prefix + "Wx_n"].T
    dh_prev += da_zr @ p[prefix + "Wh_zr"].T
    return dx, dh_prev


def _encode_forward(p, src: np.ndarray, src_mask: np.ndarray):
    B, S = src.shape
    hdim = p["enc_Wh_n"].shape[0]
    xs = p["src_emb"][src]
    h = np.zeros((B, hdim), dtype=np.float64)
    outs = np.empty((B, S, hdim), dtype=np.float64)
    cache = []
    for t in range(S):
        m = src_mask[:, t][:, None]
        h_new, (z, r, n) = _gru_forward(p, "enc_", xs[:, t], h)
        h_next = m * h_new + (1.0 - m) * h
        cache.append((h, z, r, n, m))
        h = h_next
        outs[:, t] = h
    return outs, xs, cache


def training_loss_and_gradients(model: NeuralModel, batch: Batch,
                                label_smoothing: float = 0.0):
    """Mean NLL over non-PAD target positions and analytic parameter gradients."""
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError("label_smoothing must be in [0, 1)")
    p = model._p64()
    src = np.asarray(batch.src, dtype=np.int64)
    tgt_in = np.asarray(batch.tgt_in, dtype=np.int64)
    tgt_out = np.asarray(batch.tgt_out, dtype=np.int64)
    src_mask = np.asarray(batch.src_mask, dtype=np.float64)
    tgt_mask = np.asarray(batch.tgt_mask, dtype=np.float64)
    B, S = src.shape
    T = tgt_in.shape[1]
    V = model.tgt_vocab_size
    denom = tgt_mask.sum()
    if denom <= 0:
        raise ValueError("batch has no unmasked target positions")

    enc_h, xs, enc_cache = _encode_forward(p, src, src_mask)
    s = enc_h[:, -1].copy()
    xt = p["tgt_emb"][tgt_in]
    dec_cache = []
    loss = 0.0
    eps = label_smoothing
    for t in range(T):
        s_prev = s
        s_new, (z, r, n) = _gru_forward(p, "dec_", xt[:, t], s_prev)
        m = tgt_mask[:, t][:, None]
        s = m * s_new + (1.0 - m) * s_prev
        scores = np.einsum("bh,bsh->bs", s, enc_h)
        a = _softmax_masked(scores, src_mask)
        c = np.einsum("bs,bsh->bh", a, enc_h)
        cat = np.concatenate([s, c], axis=1)
        o = np.tanh(cat @ p["out_Wc"] + p["out_bc"])
        logits = o @ p["out_W"] + p["out_b"]
        logp = _log_softmax(logits)
        rows = np.arange(B)
        nll = -logp[rows, tgt_out[:, t]]
        if eps > 0.0:
            nll = (1.0 - eps) * nll + eps * (-logp.mean(axis=1))
        loss += float((nll * tgt_mask[:, t]).sum())
        dec_cache.append((s_prev, z, r, n, m, s, a, c, cat, o, np.exp(logp)))
    loss /= denom
    if not math.isfinite(loss):
        raise FloatingPointError("training loss is not finite")

    grads = {k: np.zeros_like(v, dtype=np.float64) for k, v in p.items()}
    dEnc_h = np.zeros_like(enc_h)
    ds_carry = np.zeros((B, p["enc_Wh_n"].shape[0]), dtype=np.float64)
    for t in range(T - 1, -1, -1):
        s_prev, z, r, n, m, s_post, a, c, cat, o, probs = dec_cache[t]
        dlogits = probs.copy()
        rows = np.arange(B)
        dlogits[rows, tgt_out[:, t]] -= (1.0 - eps)
        if eps > 0.0:
            dlogits -= eps / V
        dlogits *= (tgt_mask[:, t] / denom)[:, None]
        grads["out_W"] += o.T @ dlogits
        grads["out_b"] += dlogits.sum(axis=0)
        do = dlogits @ p["out_W"].T
        dao = do * (1.0 - o * o)
        grads["out_Wc"] += cat.T @ dao
        grads["out_bc"] += dao.sum(axis=0)
        dcat = dao @ p["out_Wc"].T
        hdim = s_post.shape[1]
        ds = dcat[:, :hdim] + ds_carry
        dc = dcat[:, hdim:]
        da = np.einsum("bh,bsh->bs", dc, enc_h)
        dEnc_h += a[:, :, None] * dc[:, None, :]
        dscores = a * (da - (a * da).sum(axis=1, keepdims=True))
        ds += np.einsum("bs,bsh->bh", dscores, enc_h)
        dEnc_h += dscores[:, :, None] * s_post[:, None, :]
        ds_new = ds * m
        ds_extra = ds * (1.0 - m)
        dx, ds_prev = _gru_backward(p, "dec_", ds_new, xt[:, t], s_prev, z, r, n, grads)
        ds_carry = ds_prev + ds_extra
        np.add.at(grads["tgt_emb"], tgt_in[:, t], dx)

    dh_carry = ds_carry  # decoder init state is the final encoder state
    for t in range(S - 1, -1, -1):
        h_prev, z, r, n, m = enc_cache[t]
        dh = dEnc_h[:, t] + dh_carry
        dh_new = dh * m
        dh_extra = dh * (1.0 - m)
        dx, dh_prev = _gru_backward(p, "enc_", dh_new, xs[:, t], h_prev, z, r, n, grads)
        dh_carry = dh_prev + dh_extra
        np.add.at(grads["src_emb"], src[:, t], dx)

    return loss, grads


# -- checkpoint io -------------------------------------------------------------

def save_checkpoint(model: NeuralModel, path: str) -> None:
    """Magic, text header of `name dims...` lines, blank line, float32 payloads."""
    header_lines = []
    for name, arr in model.params.items():
        dims = " ".join(str(d) for d in arr.shape)
        header_lines.append(f"{name} {dims}\n")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write("".join(header_lines).encode("utf-8"))
        f.write(b"\n")
        for arr in model.params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> NeuralModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: missing header terminator")
    header = blob[4:sep + 1].decode("utf-8")
    payload = blob[sep + 2:]
    shapes: dict[str, tuple[int, ...]] = {}
    for line in header.splitlines():
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"{path}: malformed header line {line!r}")
        try:
            shapes[parts[0]] = tuple(int(x) for x in parts[1:])
        except ValueError as e:
            raise ValueError(f"{path}: malformed header line {line!r}") from e
    for key in ("src_emb", "tgt_emb", "enc_Wh_n"):
        if key not in shapes:
            raise ValueError(f"{path}: header is missing tensor {key}")
    vs, d = shapes["src_emb"]
    vt = shapes["tgt_emb"][0]
    hdim = shapes["enc_Wh_n"][0]
    expected = _param_shapes(vs, vt, d, hdim)
    if shapes != expected:
        raise ValueError(f"{path}: header tensors do not match the architecture")
    model = NeuralModel(vs, vt, emb_dim=d, hidden_dim=hdim, zero_init=True)
    offset = 0
    for name, shape in expected.items():
        size = int(np.prod(shape)) * 4
        chunk = payload[offset:offset + size]
        if len(chunk) != size:
            raise ValueError(f"{path}: payload truncated at tensor {name}")
        model.params[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += size
    if offset != len(payload):
        raise ValueError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return model


def load_model(path: str):
    """Open either checkpoint flavor: neural (magic bytes) or lookup (JSON)."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == CHECKPOINT_MAGIC:
        return load_checkpoint(path)
    return LookupModel.load(path)
