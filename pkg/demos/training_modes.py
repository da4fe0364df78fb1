#!/usr/bin/env python3
# Train the same model twice on a small synthetic corpus: once on fixed
# Viterbi segmentations, once resampling segmentations every batch, and
# compare the dev losses epoch by epoch.

import math

from multiseg import (NeuralModel, SyntheticTask, TrainConfig,
                      estimate_vocabulary, generate_task, train)

N_PAIRS = 400
EPOCHS = 10


def fit(mode, data, vocab_src, vocab_tgt):
    model = NeuralModel(len(vocab_src), len(vocab_tgt),
                        emb_dim=32, hidden_dim=64, seed=0)
    config = TrainConfig(mode=mode, alpha=0.2, epochs=EPOCHS, batch_size=32,
                         learning_rate=3e-3, seed=0)
    return train(model, data.train.pairs, vocab_src, vocab_tgt, config,
                 dev=data.dev.pairs)


def main():
    task = SyntheticTask(seed=0)
    data = generate_task(task, N_PAIRS)
    print(f"synthetic task: {len(data.train.pairs)} train / "
          f"{len(data.dev.pairs)} dev / {len(data.test.pairs)} test pairs")
    src, tgt = data.train.pairs[0]
    print(f"sample pair: {src!r} -> {tgt!r}")

    src_corpus = [s for s, _ in data.train.pairs]
    tgt_corpus = [t for _, t in data.train.pairs]
    vocab_src = estimate_vocabulary(src_corpus, 80, em_iters=2)
    vocab_tgt = estimate_vocabulary(tgt_corpus, 80, em_iters=2)
    print(f"vocabularies: {len(vocab_src)} source / {len(vocab_tgt)} target pieces")

    runs = {mode: fit(mode, data, vocab_src, vocab_tgt)
            for mode in ("vanilla", "subword_reg")}

    print(f"\n{'epoch':>5} {'vanilla dev':>12} {'subword_reg dev':>16}")
    for row_v, row_s in zip(runs["vanilla"].history, runs["subword_reg"].history):
        print(f"{row_v['epoch']:>5} {row_v['dev_loss']:>12.4f} {row_s['dev_loss']:>16.4f}")

    for mode, result in runs.items():
        ppl = math.exp(result.best_dev_loss)
        print(f"{mode}: best epoch {result.best_epoch}, "
              f"dev loss {result.best_dev_loss:.4f} (perplexity {ppl:.2f})")


if __name__ == "__main__":
    main()
