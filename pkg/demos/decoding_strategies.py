#!/usr/bin/env python3
"""Decode the same sentences under all five inference strategies.

Two small models are trained on the same data from different seeds. The
single-model strategies run on the first model; the ensemble strategies
aggregate both. Scores are length-normalized log-probabilities.
"""

import numpy as np

from multiseg import (DecodeStrategy, NeuralModel, SyntheticTask, TrainConfig,
                      corpus_bleu, estimate_vocabulary, generate_task,
                      translate, train)

STRATEGIES = [
    ("single", "single_best", 1),
    ("nbest", "nbest_decoding", 4),
    ("proposed", "proposed", 4),
    ("ensemble", "model_ensemble", 1),
    ("combined", "proposed_plus_ensemble", 4),
]


def main():
    data = generate_task(SyntheticTask(seed=1), 2000)
    src_corpus = [s for s, _ in data.train.pairs]
    tgt_corpus = [t for _, t in data.train.pairs]
    vocab_src = estimate_vocabulary(src_corpus[:1500], 150, em_iters=2)
    vocab_tgt = estimate_vocabulary(tgt_corpus[:1500], 150, em_iters=2)

    models = []
    for seed in (0, 1):
        model = NeuralModel(len(vocab_src), len(vocab_tgt),
                            emb_dim=64, hidden_dim=128, seed=seed)
        config = TrainConfig(mode="subword_reg", alpha=0.2, epochs=20,
                             batch_size=32, learning_rate=3e-3, seed=seed)
        result = train(model, data.train.pairs, vocab_src, vocab_tgt, config,
                       dev=data.dev.pairs)
        print(f"model seed {seed}: dev loss {result.best_dev_loss:.4f} "
              f"at epoch {result.best_epoch}")
        models.append(result.model)

    show = data.test.pairs[:2]
    eval_pairs = data.test.pairs[:40]

    for label, kind, n in STRATEGIES:
        strategy = DecodeStrategy(kind=kind, n=n, alpha=0.2, beam_width=4,
                                  seed=0)
        used = models if kind.endswith("ensemble") else models[:1]

        outputs = []
        for i, (src, _) in enumerate(eval_pairs):
            rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(i,)))
            outputs.append(translate(src, used, vocab_src, vocab_tgt,
                                     strategy, rng))
        bleu = corpus_bleu([r.output for r in outputs],
                           [ref for _, ref in eval_pairs]).bleu

        print(f"\n{label} (n={n}, {len(used)} model(s)): "
              f"BLEU {bleu:.2f} on {len(eval_pairs)} held-out sentences")
        for (src, ref), res in zip(show, outputs):
            print(f"  src: {src}")
            print(f"  ref: {ref}")
            print(f"  out: {res.output}   (norm score {res.normalized_score:.3f})")


if __name__ == "__main__":
    main()
