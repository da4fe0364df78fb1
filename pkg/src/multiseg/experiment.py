"""End-to-end experiment harness: train per-seed models on the synthetic task,
decode the test split under each strategy, and tabulate BLEU per cell.

Strategy row names pair a model section with a decoding rule:

  single.vanilla            per-seed vanilla-trained model, best segmentation
  single.subreg             per-seed subword-regularized model, best segmentation
  single.subreg_nbest       same models, n-best segmentation candidates
  single.subreg_proposed    same models, multi-segmentation joint decoding
  ensemble.vanilla          all vanilla seeds jointly, best segmentation
  ensemble.subreg           all subreg seeds jointly, best segmentation
  ensemble.subreg_nbest     all subreg seeds jointly per n-best candidate
  ensemble.subreg_proposed  all subreg seeds jointly over sampled segmentations

Sampled rows (the *_proposed ones) are repeated decode_repeats times with
fresh decode seeds and averaged.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from .bleu import corpus_bleu
from .decode import DecodeStrategy, batch_translate
from .estimation import estimate_vocabulary
from .models import NeuralModel
from .synthetic import SyntheticTask, generate_task
from .train import TrainConfig, train
from .vocab import Vocabulary

ALL_STRATEGY_ROWS = (
    "single.vanilla",
    "single.subreg",
    "single.subreg_nbest",
    "single.subreg_proposed",
    "ensemble.vanilla",
    "ensemble.subreg",
    "ensemble.subreg_nbest",
    "ensemble.subreg_proposed",
)

_ROW_RULES = {
    # row: (training mode, strategy kind, ensemble?, sampled?)
    "single.vanilla": ("vanilla", "single_best", False, False),
    "single.subreg": ("subword_reg", "single_best", False, False),
    "single.subreg_nbest": ("subword_reg", "nbest_decoding", False, False),
    "single.subreg_proposed": ("subword_reg", "proposed", False, True),
    "ensemble.vanilla": ("vanilla", "model_ensemble", True, False),
    "ensemble.subreg": ("subword_reg", "model_ensemble", True, False),
    "ensemble.subreg_nbest": ("subword_reg", "nbest_decoding", True, False),
    "ensemble.subreg_proposed": ("subword_reg", "proposed_plus_ensemble", True, True),
}


@dataclass
class ExperimentSpec:
    """Knobs for one experiment; every field has a deterministic effect.

    sizes are training-pair counts; the strategy comparison uses sizes[0].
    eval_cap bounds the test sentences scored, em_corpus_cap and seed_cap
    bound vocabulary estimation work, and max_steps scales epochs down for
    large sizes. All exist to keep desk-scale runs inside their time budgets.
    """

    sizes: list[int] = field(default_factory=lambda: [2000])
    seeds: int = 3
    decode_repeats: int = 3
    strategies: list[str] = field(default_factory=lambda: list(ALL_STRATEGY_ROWS))
    alpha: float = 0.2
    n: int = 5
    beam_width: int = 4
    vocab_size: int = 150
    base_seed: int = 0
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-3
    warmup_steps: int = 100
    grad_clip_norm: float = 5.0
    label_smoothing: float = 0.0
    emb_dim: int = 64
    hidden_dim: int = 128
    eval_cap: int | None = 250
    em_corpus_cap: int | None = 2000
    em_iters: int = 2
    seed_cap: int | None = 3000
    max_steps: int | None = 6000
    threads: int = 1

    def __post_init__(self):
        for row in self.strategies:
            if row not in _ROW_RULES:
                raise ValueError(f"unknown strategy row {row!r}; "
                                 f"choose from {sorted(_ROW_RULES)}")
        if self.seeds < 1 or self.decode_repeats < 1:
            raise ValueError("seeds and decode_repeats must be >= 1")


@dataclass(frozen=True)
class RunRow:
    """One decode run of one strategy row; the TSV rows are exactly these."""

    size: int
    seed: int
    strategy: str
    bleu: float
    p1: float
    p2: float
    p3: float
    p4: float
    bp: float


@dataclass
class ComparisonResult:
    size: int
    rows: list[RunRow]

    def runs(self, strategy: str) -> list[RunRow]:
        return [r for r in self.rows if r.strategy == strategy]

    def mean(self, strategy: str) -> float:
        runs = self.runs(strategy)
        if not runs:
            raise KeyError(f"no runs for {strategy!r}")
        return statistics.fmean(r.bleu for r in runs)

    def std(self, strategy: str) -> float:
        runs = self.runs(strategy)
        return statistics.pstdev(r.bleu for r in runs) if len(runs) > 1 else 0.0

    def strategies(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.strategy not in seen:
                seen.append(r.strategy)
        return seen

    def to_markdown(self) -> str:
        lines = [f"BLEU on the synthetic task, {self.size} training pairs",
                 "", "| section | strategy | BLEU | runs |", "| --- | --- | --- | --- |"]
        for strat in self.strategies():
            section, _, name = strat.partition(".")
            n_runs = len(self.runs(strat))
            lines.append(f"| {section} | {name} | "
                         f"{self.mean(strat):.2f} +/- {self.std(strat):.2f} | {n_runs} |")
        return "\n".join(lines) + "\n"


@dataclass
class SweepResult:
    per_size: dict[int, ComparisonResult]
    gap_rows: tuple[str, str] = ("single.subreg", "single.subreg_proposed")

    def gap(self, size: int) -> float:
        res = self.per_size[size]
        base, plus = self.gap_rows
        return res.mean(plus) - res.mean(base)

    def to_markdown(self) -> str:
        base, plus = self.gap_rows
        lines = [f"Gap ({plus} minus {base}) by training-set size", "",
                 "| size | " + base + " | " + plus + " | gap |",
                 "| --- | --- | --- | --- |"]
        for size in sorted(self.per_size):
            res = self.per_size[size]
            lines.append(f"| {size} | {res.mean(base):.2f} | {res.mean(plus):.2f} | "
                         f"{self.gap(size):+.2f} |")
        return "\n".join(lines) + "\n"


def rows_to_tsv(rows: list[RunRow]) -> str:
    """The results file: one header line, then one line per decode run."""
    out = ["size\tseed\tstrategy\tbleu\tp1\tp2\tp3\tp4\tbp"]
    for r in rows:
        out.append(f"{r.size}\t{r.seed}\t{r.strategy}\t{r.bleu:.6f}\t"
                   f"{r.p1:.6f}\t{r.p2:.6f}\t{r.p3:.6f}\t{r.p4:.6f}\t{r.bp:.6f}")
    return "\n".join(out) + "\n"


def _effective_epochs(spec: ExperimentSpec, n_train: int) -> int:
    if spec.max_steps is None:
        return spec.epochs
    steps_per_epoch = max(1, math.ceil(n_train / spec.batch_size))
    return max(1, min(spec.epochs, round(spec.max_steps / steps_per_epoch)))


def _train_models(spec: ExperimentSpec, mode: str, train_pairs, dev_pairs,
                  vocab_src: Vocabulary, vocab_tgt: Vocabulary) -> list[NeuralModel]:
    out = []
    epochs = _effective_epochs(spec, len(train_pairs))
    for seed_i in range(spec.seeds):
        model = NeuralModel(len(vocab_src), len(vocab_tgt),
                            emb_dim=spec.emb_dim, hidden_dim=spec.hidden_dim,
                            seed=spec.base_seed * 1000 + seed_i)
        config = TrainConfig(mode=mode, epochs=epochs, batch_size=spec.batch_size,
                             learning_rate=spec.learning_rate, alpha=spec.alpha,
                             warmup_steps=spec.warmup_steps,
                             grad_clip_norm=spec.grad_clip_norm,
                             label_smoothing=spec.label_smoothing,
                             seed=spec.base_seed * 1000 + seed_i)
        out.append(train(model, train_pairs, vocab_src, vocab_tgt, config, dev_pairs).model)
    return out


def _estimate_vocabs(spec: ExperimentSpec, train_pairs) -> tuple[Vocabulary, Vocabulary]:
    srcs = [s for s, _ in train_pairs]
    tgts = [t for _, t in train_pairs]
    if spec.em_corpus_cap is not None:
        srcs = srcs[:spec.em_corpus_cap]
        tgts = tgts[:spec.em_corpus_cap]
    kw = dict(target_size=spec.vocab_size, em_iters=spec.em_iters, seed_cap=spec.seed_cap)
    return estimate_vocabulary(srcs, **kw), estimate_vocabulary(tgts, **kw)


def run_strategy_comparison(spec: ExperimentSpec, task: SyntheticTask,
                            size: int | None = None) -> ComparisonResult:
    """Train seeds x modes, decode every requested strategy row, tabulate BLEU."""
    size = spec.sizes[0] if size is None else size
    data = generate_task(task, max(10, math.ceil(size / 0.8)))
    train_pairs = data.train.pairs[:size]
    dev_pairs = data.dev.pairs
    test_pairs = data.test.pairs
    if spec.eval_cap is not None:
        test_pairs = test_pairs[:spec.eval_cap]
    srcs = [s for s, _ in test_pairs]
    refs = [t for _, t in test_pairs]
    vocab_src, vocab_tgt = _estimate_vocabs(spec, train_pairs)

    modes_needed = {_ROW_RULES[row][0] for row in spec.strategies}
    models_by_mode: dict[str, list[NeuralModel]] = {}
    for mode in sorted(modes_needed):
        models_by_mode[mode] = _train_models(spec, mode, train_pairs, dev_pairs,
                                             vocab_src, vocab_tgt)

    rows: list[RunRow] = []
    for row_name in spec.strategies:
        mode, kind, is_ensemble, is_sampled = _ROW_RULES[row_name]
        models = models_by_mode[mode]
        repeats = spec.decode_repeats if is_sampled else 1
        if is_ensemble:
            groups = [(0, models)]
        else:
            groups = [(i, [m]) for i, m in enumerate(models)]
        for group_seed, group_models in groups:
            for rep in range(repeats):
                decode_seed = spec.base_seed * 100000 + group_seed * 100 + rep
                strategy = DecodeStrategy(kind=kind, n=spec.n, alpha=spec.alpha,
                                          beam_width=spec.beam_width, seed=decode_seed)
                results = batch_translate(srcs, group_models, vocab_src, vocab_tgt,
                                          strategy, threads=spec.threads)
                report = corpus_bleu([r.output for r in results], refs)
                seed_col = group_seed if not (is_ensemble and is_sampled) else rep
                rows.append(RunRow(size=size, seed=seed_col, strategy=row_name,
                                   bleu=report.bleu, p1=report.precisions[0],
                                   p2=report.precisions[1], p3=report.precisions[2],
                                   p4=report.precisions[3], bp=report.brevity_penalty))
    return ComparisonResult(size=size, rows=rows)


def run_datasize_sweep(spec: ExperimentSpec, task: SyntheticTask,
                       sizes: list[int] | None = None) -> SweepResult:
    """Repeat the comparison per size; the gap row pair defaults to
    multi-segmentation decoding minus single-best on subreg models."""
    sizes = spec.sizes if sizes is None else sizes
    per_size = {size: run_strategy_comparison(spec, task, size) for size in sizes}
    return SweepResult(per_size=per_size)
