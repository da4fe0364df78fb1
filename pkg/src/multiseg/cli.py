"""Command line entry points.

Exit codes: 0 success, 2 usage or data errors, 3 numeric failures. All
commands are deterministic for fixed flags and --seed; line-oriented commands
stream stdin to stdout without holding the corpus in memory.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .bleu import corpus_bleu
from .decode import DecodeStrategy, translate
from .estimation import corpus_log_likelihood, estimate_vocabulary
from .experiment import (ALL_STRATEGY_ROWS, ExperimentSpec, rows_to_tsv,
                         run_datasize_sweep, run_strategy_comparison)
from .lattice import build_lattice
from .models import load_model, save_checkpoint, NeuralModel
from .synthetic import SyntheticTask
from .train import TrainConfig, train
from .vocab import Vocabulary

STRATEGY_NAMES = {
    "single": "single_best",
    "nbest": "nbest_decoding",
    "proposed": "proposed",
    "ensemble": "model_ensemble",
    "combined": "proposed_plus_ensemble",
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker cap (default 1)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="multiseg",
        description="Subword-regularized translation with multi-segmentation decoding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", parents=[common],
                       help="estimate a piece vocabulary from raw text")
    p.add_argument("--input", required=True, help="training text, one sentence per line")
    p.add_argument("--out", required=True, help="vocabulary TSV to write")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--max-piece-len", type=int, default=8)
    p.add_argument("--em-iters", type=int, default=4)
    p.add_argument("--prune-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_vocab)

    p = sub.add_parser("segment", parents=[common],
                       help="segment stdin lines with a vocabulary")
    p.add_argument("--vocab", required=True)
    p.add_argument("--mode", choices=["viterbi", "sample", "nbest"], default="viterbi")
    p.add_argument("--alpha", type=float, default=0.2, help="sampling temperature")
    p.add_argument("--n", type=int, default=5, help="list size for nbest mode")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", parents=[common], help="train a translation model")
    p.add_argument("--src", required=True, help="source sentences, one per line")
    p.add_argument("--tgt", required=True, help="target sentences, one per line")
    p.add_argument("--src-vocab", required=True)
    p.add_argument("--tgt-vocab", required=True)
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--mode", choices=["vanilla", "subword_reg"], default="subword_reg")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--emb-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--dev-src", help="held-out source sentences for model selection")
    p.add_argument("--dev-tgt", help="held-out target sentences for model selection")
    p.add_argument("--metrics", help="per-epoch loss TSV (default: OUT.metrics.tsv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", parents=[common], help="translate stdin lines")
    p.add_argument("--model", action="append", required=True,
                   help="checkpoint; repeat the flag or comma-join for ensembles")
    p.add_argument("--src-vocab", required=True)
    p.add_argument("--tgt-vocab", required=True)
    p.add_argument("--strategy", choices=sorted(STRATEGY_NAMES), default="single")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-norm", type=float, default=1.0)
    p.add_argument("--dump-scores", help="write per-candidate score rows (TSV)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("bleu", parents=[common], help="score a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("experiment", parents=[common],
                       help="run the strategy comparison / data-size sweep")
    p.add_argument("--config", required=True, help="key = value settings file")
    p.add_argument("--out-dir", default=".", help="where results land (default .)")
    p.set_defaults(func=cmd_experiment)
    return parser


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def cmd_vocab(args) -> int:
    corpus = _read_lines(args.input)
    vocab = estimate_vocabulary(corpus, args.vocab_size,
                                max_piece_len=args.max_piece_len,
                                em_iters=args.em_iters,
                                prune_fraction=args.prune_fraction)
    vocab.save(args.out)
    if not args.quiet:
        print(f"pieces\t{len(vocab)}")
        print(f"log_likelihood\t{corpus_log_likelihood(corpus, vocab):.6f}")
    return 0


def cmd_segment(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    out = sys.stdout
    for idx, line in enumerate(sys.stdin):
        raw = line.rstrip("\n")
        if not raw:
            out.write("\n")
            continue
        lat = build_lattice(raw, vocab)
        if args.mode == "viterbi":
            seg = lat.viterbi()
            out.write(" ".join(seg.surfaces(vocab)) + "\n")
        elif args.mode == "sample":
            rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(idx,)))
            seg = lat.sample(args.alpha, rng)
            out.write(" ".join(seg.surfaces(vocab)) + "\n")
        else:
            for rank, seg in enumerate(lat.nbest(args.n), start=1):
                out.write(f"{rank}\t" + " ".join(seg.surfaces(vocab)) + "\n")
    return 0


def cmd_train(args) -> int:
    src = _read_lines(args.src)
    tgt = _read_lines(args.tgt)
    if len(src) != len(tgt):
        raise ValueError(f"{args.src} has {len(src)} lines, {args.tgt} has {len(tgt)}")
    pairs = [(s, t) for s, t in zip(src, tgt) if s and t]
    if not pairs:
        raise ValueError("no non-empty sentence pairs")
    dev = None
    if bool(args.dev_src) != bool(args.dev_tgt):
        raise ValueError("--dev-src and --dev-tgt must be given together")
    if args.dev_src:
        dsrc, dtgt = _read_lines(args.dev_src), _read_lines(args.dev_tgt)
        if len(dsrc) != len(dtgt):
            raise ValueError("dev files differ in length")
        dev = [(s, t) for s, t in zip(dsrc, dtgt) if s and t]
    vocab_src = Vocabulary.load(args.src_vocab)
    vocab_tgt = Vocabulary.load(args.tgt_vocab)
    model = NeuralModel(len(vocab_src), len(vocab_tgt), emb_dim=args.emb_dim,
                        hidden_dim=args.hidden_dim, seed=args.seed)
    config = TrainConfig(mode=args.mode, epochs=args.epochs, batch_size=args.batch_size,
                         learning_rate=args.lr, alpha=args.alpha, seed=args.seed)
    result = train(model, pairs, vocab_src, vocab_tgt, config, dev)
    save_checkpoint(result.model, args.out)
    metrics_path = args.metrics or args.out + ".metrics.tsv"
    with open(metrics_path, "w", encoding="utf-8") as f:
        f.write("epoch\ttrain_loss\tdev_loss\n")
        for row in result.history:
            f.write(f"{row['epoch']}\t{row['train_loss']:.6f}\t{row['dev_loss']:.6f}\n")
    if not args.quiet:
        print(f"best_epoch\t{result.best_epoch}")
        print(f"best_dev_loss\t{result.best_dev_loss:.6f}")
    return 0


def cmd_translate(args) -> int:
    paths = [p for arg in args.model for p in arg.split(",") if p]
    models = [load_model(path) for path in paths]
    strategy_kind = STRATEGY_NAMES[args.strategy]
    if strategy_kind in ("model_ensemble", "proposed_plus_ensemble") and len(models) == 1:
        print("warning: ensemble strategy with a single model", file=sys.stderr)
    vocab_src = Vocabulary.load(args.src_vocab)
    vocab_tgt = Vocabulary.load(args.tgt_vocab)
    strategy = DecodeStrategy(kind=strategy_kind, n=args.n, alpha=args.alpha,
                              beam_width=args.beam, max_len=args.max_len,
                              length_norm_power=args.length_norm, seed=args.seed)
    dump = open(args.dump_scores, "w", encoding="utf-8") if args.dump_scores else None
    if dump:
        dump.write("line\trank\tscore\tnormalized\tsegmentation\toutput\n")

    def run_line(idx: int, raw: str):
        rng = np.random.default_rng(np.random.SeedSequence(strategy.seed, spawn_key=(idx,)))
        return translate(raw, models, vocab_src, vocab_tgt, strategy, rng)

    def emit(idx: int, raw: str, res) -> None:
        sys.stdout.write(res.output + "\n")
        if dump is None:
            return
        ranked = res.candidates if res.candidates is not None else [res]
        for rank, cand in enumerate(ranked, start=1):
            seg = ",".join(str(t) for s in cand.segmentations for t in s.token_ids)
            dump.write(f"{idx}\t{rank}\t{cand.score:.6f}\t"
                       f"{cand.normalized_score:.6f}\t{seg}\t{cand.output}\n")

    try:
        if args.threads > 1:
            chunk: list[tuple[int, str]] = []
            chunk_size = args.threads * 8

            def flush():
                with ThreadPoolExecutor(max_workers=args.threads) as pool:
                    results = list(pool.map(lambda it: run_line(*it),
                                            [(i, r) for i, r in chunk]))
                for (i, r), res in zip(chunk, results):
                    emit(i, r, res)
                chunk.clear()

            for idx, line in enumerate(sys.stdin):
                raw = line.rstrip("\n")
                if not raw:
                    if chunk:
                        flush()
                    sys.stdout.write("\n")
                    continue
                chunk.append((idx, raw))
                if len(chunk) >= chunk_size:
                    flush()
            if chunk:
                flush()
        else:
            for idx, line in enumerate(sys.stdin):
                raw = line.rstrip("\n")
                if not raw:
                    sys.stdout.write("\n")
                    continue
                emit(idx, raw, run_line(idx, raw))
    finally:
        if dump:
            dump.close()
    return 0


def cmd_bleu(args) -> int:
    hyp = _read_lines(args.hyp)
    ref = _read_lines(args.ref)
    report = corpus_bleu(hyp, ref)
    print(f"bleu\t{report.bleu:.6f}")
    for i, p in enumerate(report.precisions, start=1):
        print(f"p{i}\t{p:.6f}")
    print(f"brevity_penalty\t{report.brevity_penalty:.6f}")
    print(f"hyp_length\t{report.hyp_length}")
    print(f"ref_length\t{report.ref_length}")
    return 0


_EXPERIMENT_KEYS = {
    "sizes": lambda v: [int(x) for x in v.split(",")],
    "seeds": int, "decode_repeats": int,
    "strategies": lambda v: [x.strip() for x in v.split(",")],
    "alpha": float, "n": int, "beam_width": int, "vocab_size": int,
    "base_seed": int, "epochs": int, "batch_size": int,
    "learning_rate": float, "warmup_steps": int, "grad_clip_norm": float,
    "label_smoothing": float, "emb_dim": int, "hidden_dim": int,
    "eval_cap": int, "em_corpus_cap": int, "em_iters": int,
    "seed_cap": int, "max_steps": int, "threads": int,
}
_TASK_KEYS = {
    "task_seed": ("seed", int),
    "lexicon_size": ("lexicon_size", int),
    "boundary_drop_rate": ("boundary_drop_rate", float),
    "sent_len_min": ("sent_len_min", int),
    "sent_len_max": ("sent_len_max", int),
    "word_len_min": ("word_len_min", int),
    "word_len_max": ("word_len_max", int),
}


def parse_experiment_config(text: str) -> tuple[ExperimentSpec, SyntheticTask]:
    """Line-oriented `key = value` settings; # starts a comment."""
    spec_kw: dict = {}
    task_kw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _EXPERIMENT_KEYS:
            spec_kw[key] = _EXPERIMENT_KEYS[key](value)
        elif key in _TASK_KEYS:
            field, conv = _TASK_KEYS[key]
            task_kw[field] = conv(value)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ExperimentSpec(**spec_kw), SyntheticTask(**task_kw)


def cmd_experiment(args) -> int:
    import os
    with open(args.config, "r", encoding="utf-8") as f:
        spec, task = parse_experiment_config(f.read())
    os.makedirs(args.out_dir, exist_ok=True)
    if len(spec.sizes) > 1:
        sweep = run_datasize_sweep(spec, task)
        rows = [r for size in sorted(sweep.per_size)
                for r in sweep.per_size[size].rows]
        summary = "".join(sweep.per_size[s].to_markdown() + "\n"
                          for s in sorted(sweep.per_size)) + sweep.to_markdown()
    else:
        comparison = run_strategy_comparison(spec, task)
        rows = comparison.rows
        summary = comparison.to_markdown()
    results_path = os.path.join(args.out_dir, "results.tsv")
    summary_path = os.path.join(args.out_dir, "summary.md")
    with open(results_path, "w", encoding="utf-8") as f:
        f.write(rows_to_tsv(rows))
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write(summary)
    if not args.quiet:
        print(f"results\t{results_path}")
        print(f"summary\t{summary_path}")
        print(summary, end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except RuntimeError as e:
        cause = e.__cause__
        while cause is not None:
            if isinstance(cause, FloatingPointError):
                print(f"error: {e}", file=sys.stderr)
                return 3
            cause = cause.__cause__
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
