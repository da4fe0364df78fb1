#!/usr/bin/env python3
"""Walk through the segmentation lattice on a toy vocabulary.

Builds the classic three-piece vocabulary {a, b, ab}, prints every path
through the lattice for a couple of strings, then shows how the sampling
temperature moves the distribution between uniform and Viterbi. Ends with
a tiny EM vocabulary estimation run on a synthetic corpus.
"""

import math

import numpy as np

from multiseg import (Vocabulary, build_lattice, corpus_log_likelihood,
                      estimate_vocabulary, segmentation_log_prob)


def show_lattice(raw, vocab):
    lat = build_lattice(raw, vocab)
    print(f"\nlattice for {raw!r}: {len(lat.edges)} edges")
    for seg in lat.nbest(10):
        pieces = " + ".join(seg.surfaces(vocab))
        prob = math.exp(segmentation_log_prob(lat, seg))
        print(f"  {pieces:<20} log-weight {seg.log_weight:8.4f}   P = {prob:.4f}")
    print(f"  log partition: {lat.log_partition():.4f}")


def show_sampling(raw, vocab, alphas, draws=5000):
    lat = build_lattice(raw, vocab)
    viterbi_ids = lat.viterbi().token_ids
    print(f"\nsampling {draws} segmentations of {raw!r} per temperature")
    rng = np.random.default_rng(0)
    for alpha in alphas:
        counts = {}
        for _ in range(draws):
            seg = lat.sample(alpha, rng)
            counts[seg.token_ids] = counts.get(seg.token_ids, 0) + 1
        top = sorted(counts.items(), key=lambda kv: -kv[1])
        desc = ", ".join(
            f"{'|'.join(vocab.surface(t) for t in ids)}: {c / draws:.3f}"
            for ids, c in top)
        marker = " (viterbi)" if top[0][0] == viterbi_ids else ""
        print(f"  alpha={alpha:<5} {desc}{marker}")


def main():
    vocab = Vocabulary([("a", math.log(0.4)),
                        ("b", math.log(0.3)),
                        ("ab", math.log(0.3))])
    print("pieces:", [(vocab.surface(i), round(float(vocab.log_probs[i]), 4))
                      for i in range(4, len(vocab))])

    show_lattice("ab", vocab)
    show_lattice("abab", vocab)

    # alpha=0 samples uniformly, alpha=1 follows the unigram weights,
    # large alpha collapses onto the Viterbi segmentation
    show_sampling("ab", vocab, alphas=[0.0, 0.2, 1.0, 100.0])

    corpus = ["abab", "ab", "aba", "bab", "abab", "ab"] * 3
    print("\nestimating a 7-piece vocabulary from", len(corpus), "lines")
    trace = []
    learned = estimate_vocabulary(corpus, 7, em_iters=4, ll_trace=trace)
    for i in range(4, len(learned)):
        print(f"  {learned.surface(i):<6} p = {math.exp(learned.log_probs[i]):.4f}")
    print("  per-iteration corpus log-likelihoods:",
          [f"{ll[-1]:.3f}" for ll in trace])
    print(f"  final corpus log-likelihood: {corpus_log_likelihood(corpus, learned):.3f}")


if __name__ == "__main__":
    main()
