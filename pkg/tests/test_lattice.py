"""Lattice operations checked against brute-force enumeration.

The oracle enumerates every segmentation of a string by recursion over
match positions, then recomputes viterbi/n-best/partition/posteriors from
that list with plain Python floats. The lattice must agree to 1e-9.
"""

import itertools
import math

import numpy as np
import pytest

from multiseg import (UNK, UNK_LOG_PROB, Lattice, Segmentation, Vocabulary,
                      build_lattice, nbest, sample_segmentation,
                      segmentation_log_prob, viterbi)

TOY = Vocabulary([("a", math.log(0.4)), ("b", math.log(0.3)),
                  ("ab", math.log(0.3))])


def enumerate_segmentations(raw, vocab):
    """All (ids, log_weight) decompositions, UNK covering single chars."""
    by_surface = {s: (pid, lp) for s, lp, pid in vocab.pieces if pid >= 4}
    results = []

    def go(pos, ids, lw):
        if pos == len(raw):
            results.append((tuple(ids), lw))
            return
        matched_single = False
        for end in range(pos + 1, min(len(raw), pos + vocab.max_piece_len) + 1):
            piece = raw[pos:end]
            if piece in by_surface:
                pid, lp = by_surface[piece]
                if end == pos + 1:
                    matched_single = True
                go(end, ids + [pid], lw + lp)
        if not matched_single:
            go(pos + 1, ids + [UNK], lw + UNK_LOG_PROB)

    go(0, [], 0.0)
    return results


def oracle_viterbi(segs):
    # fewer tokens break score ties, then ascending id sequence
    return min(segs, key=lambda s: (-s[1], len(s[0]), s[0]))


def oracle_nbest(segs, n):
    ordered = sorted(segs, key=lambda s: (-s[1], len(s[0]), s[0]))
    return ordered[:n]


def tie_groups(entries, tol=1e-9):
    """Split (ids, score) rows, already sorted by score desc, at score gaps > tol."""
    groups = []
    for ids, score in entries:
        if groups and abs(groups[-1][-1][1] - score) <= tol:
            groups[-1].append((ids, score))
        else:
            groups.append([(ids, score)])
    return groups


def assert_ranked_equal(got, want_full, n, tol=1e-9):
    """The n-best list agrees with the full ranked oracle up to reordering
    inside float-tied score groups (same pieces summed in a different order
    drift a few ulps, legitimately swapping neighbours)."""
    assert len(got) == min(n, len(want_full))
    for (_, gs), (_, ws) in zip(got, want_full):
        assert gs == pytest.approx(ws, rel=tol, abs=1e-12)
    pos = 0
    for group in tie_groups(want_full, tol):
        chunk = got[pos:pos + len(group)]
        if not chunk:
            break
        got_ids = {ids for ids, _ in chunk}
        want_ids = {ids for ids, _ in group}
        if len(chunk) == len(group):
            assert got_ids == want_ids
        else:  # the n-th place cut through the group: subset is acceptable
            assert got_ids <= want_ids
        pos += len(group)


def oracle_log_partition(segs, alpha=1.0):
    if alpha == 0.0:
        return math.log(len(segs))
    return math.log(math.fsum(math.exp(alpha * lw) for _, lw in segs))


def random_vocab(rng):
    alphabet = "abc"
    surfaces = list(alphabet)
    pool = ["".join(p) for k in (2, 3)
            for p in itertools.product(alphabet, repeat=k)]
    picks = rng.choice(len(pool), size=rng.integers(2, 9), replace=False)
    surfaces += [pool[i] for i in picks]
    weights = rng.dirichlet(np.ones(len(surfaces)))
    return Vocabulary([(s, math.log(w)) for s, w in zip(surfaces, weights)])


def all_strings(alphabet, max_len):
    for k in range(1, max_len + 1):
        for chars in itertools.product(alphabet, repeat=k):
            yield "".join(chars)


def test_edges_match_substring_enumeration():
    lat = build_lattice("ab", TOY)
    got = {(e.start, e.end, TOY.surface(e.piece_id)) for e in lat.edges}
    assert got == {(0, 1, "a"), (1, 2, "b"), (0, 2, "ab")}

    lat = build_lattice("a", TOY)
    got = {(e.start, e.end, TOY.surface(e.piece_id)) for e in lat.edges}
    assert got == {(0, 1, "a")}


def test_unknown_character_fallback():
    lat = build_lattice("az", TOY)
    got = {(e.start, e.end, e.piece_id) for e in lat.edges}
    assert got == {(0, 1, TOY.piece_id("a")), (1, 2, UNK)}
    seg = lat.viterbi()
    assert seg.token_ids == (TOY.piece_id("a"), UNK)
    assert seg.log_weight == pytest.approx(math.log(0.4) + UNK_LOG_PROB)


def test_empty_string_rejected():
    with pytest.raises(ValueError):
        build_lattice("", TOY)


def test_viterbi_fixtures():
    assert viterbi(build_lattice("ab", TOY)).surfaces(TOY) == ["ab"]
    # 0.4*0.3 = 0.12 beats 0.4*0.4*0.3 = 0.048
    assert viterbi(build_lattice("aab", TOY)).surfaces(TOY) == ["a", "ab"]
    assert viterbi(build_lattice("b", TOY)).surfaces(TOY) == ["b"]


def test_nbest_fixtures():
    lat = build_lattice("ab", TOY)
    two = nbest(lat, 2)
    assert [s.surfaces(TOY) for s in two] == [["ab"], ["a", "b"]]
    # no padding beyond the true number of segmentations
    assert len(nbest(lat, 10)) == 2
    assert nbest(lat, 1) == [lat.viterbi()]


def test_log_prob_fixtures():
    lat = build_lattice("ab", TOY)
    best = lat.viterbi()
    assert lat.log_prob(best, 1.0) == pytest.approx(math.log(5 / 7), rel=1e-12)
    for seg in lat.iter_segmentations():
        assert lat.log_prob(seg, 0.0) == pytest.approx(math.log(0.5), rel=1e-12)
    total = sum(math.exp(lat.log_prob(s, 1.0)) for s in lat.iter_segmentations())
    assert total == pytest.approx(1.0, abs=1e-9)


def test_log_prob_rejects_foreign_segmentation():
    lat = build_lattice("ab", TOY)
    fake = Segmentation(token_ids=(TOY.piece_id("b"),), raw="ab", log_weight=0.0)
    with pytest.raises(ValueError):
        lat.log_prob(fake, 1.0)


def test_brute_force_oracle_random_vocabs():
    rng = np.random.default_rng(20240817)
    for _ in range(5):
        vocab = random_vocab(rng)
        for raw in all_strings("abc", 6):
            segs = enumerate_segmentations(raw, vocab)
            lat = build_lattice(raw, vocab)

            ranked = oracle_nbest(segs, len(segs))

            got = lat.viterbi()
            want_ids, want_lw = oracle_viterbi(segs)
            top = tie_groups(ranked)[0]
            assert got.token_ids in {ids for ids, _ in top}, raw
            assert got.log_weight == pytest.approx(want_lw, rel=1e-9)

            for n in (1, 3, 100):
                got_n = [(s.token_ids, s.log_weight) for s in lat.nbest(n)]
                assert_ranked_equal(got_n, ranked, n)

            for alpha in (0.0, 0.5, 1.0):
                assert lat.log_partition(alpha) == pytest.approx(
                    oracle_log_partition(segs, alpha), rel=1e-9, abs=1e-12)

            z = oracle_log_partition(segs, 1.0)
            for ids, lw in segs:
                seg = Segmentation(token_ids=ids, raw=raw, log_weight=lw)
                assert lat.log_prob(seg, 1.0) == pytest.approx(
                    lw - z, rel=1e-9, abs=1e-12)


def test_posterior_sums_to_one_any_alpha():
    rng = np.random.default_rng(5)
    vocab = random_vocab(rng)
    for raw in ("abcab", "cccc", "ababab"):
        lat = build_lattice(raw, vocab)
        for alpha in (0.0, 0.3, 1.0, 4.0):
            total = math.fsum(math.exp(lat.log_prob(s, alpha))
                              for s in lat.iter_segmentations())
            assert total == pytest.approx(1.0, abs=1e-9)


def test_sampling_is_seed_deterministic():
    lat = build_lattice("ababa", TOY)
    draws1 = [sample_segmentation(lat, 0.8, np.random.default_rng(42)).token_ids
              for _ in range(5)]
    draws2 = [sample_segmentation(lat, 0.8, np.random.default_rng(42)).token_ids
              for _ in range(5)]
    assert draws1 == draws2


def test_sampling_matches_exact_distribution():
    lat = build_lattice("ab", TOY)
    rng = np.random.default_rng(7)
    n = 20000
    best = lat.viterbi().token_ids
    hits = sum(lat.sample(1.0, rng).token_ids == best for _ in range(n))
    assert hits / n == pytest.approx(5 / 7, abs=0.01)

    hits0 = sum(lat.sample(0.0, rng).token_ids == best for _ in range(n))
    assert hits0 / n == pytest.approx(0.5, abs=0.01)

    hits_hi = sum(lat.sample(100.0, rng).token_ids == best for _ in range(2000))
    assert hits_hi / 2000 >= 0.999


def test_sample_weight_matches_segmentation():
    lat = build_lattice("aab", TOY)
    rng = np.random.default_rng(0)
    for _ in range(20):
        seg = lat.sample(0.5, rng)
        recomputed = sum(TOY.log_prob(t) if t != UNK else UNK_LOG_PROB
                         for t in seg.token_ids)
        assert seg.log_weight == pytest.approx(recomputed, rel=1e-12)
        assert "".join(seg.surfaces(TOY)) == "aab"


def test_exact_tie_breaking():
    # p(ab) = p(a)·p(b) holds bit-for-bit (0.0625 = 0.25², log summation exact),
    # so "ab" has two segmentations with identical scores and different lengths.
    v = Vocabulary([("a", math.log(0.25)), ("b", math.log(0.25)),
                    ("ab", math.log(0.0625)), ("c", math.log(0.4375))])
    assert math.log(0.25) + math.log(0.25) == math.log(0.0625)
    lat = build_lattice("ab", v)
    a, b, ab = v.piece_id("a"), v.piece_id("b"), v.piece_id("ab")
    assert lat.viterbi().token_ids == (ab,)  # fewer tokens wins the tie
    assert [s.token_ids for s in lat.nbest(2)] == [(ab,), (a, b)]

    # equal-probability pieces: same-length segmentations tie exactly, and the
    # ascending id sequence must come first
    w = Vocabulary([("a", math.log(0.25)), ("b", math.log(0.25)),
                    ("ab", math.log(0.25)), ("ba", math.log(0.25))])
    a, b, ab, ba = (w.piece_id(s) for s in ("a", "b", "ab", "ba"))
    lat = build_lattice("aba", w)
    # [a,ba] and [ab,a] both score 2·log(0.25); (a,ba) < (ab,a) by ids
    two = [s.token_ids for s in build_lattice("aba", w).nbest(2)]
    assert two == [(a, ba), (ab, a)]


def test_functional_wrappers_agree():
    lat = build_lattice("aab", TOY)
    assert viterbi(lat) == lat.viterbi()
    assert nbest(lat, 2) == lat.nbest(2)
    seg = lat.viterbi()
    assert segmentation_log_prob(lat, seg, 1.0) == lat.log_prob(seg, 1.0)


try:
    from hypothesis import given, settings, strategies as st

    @given(st.text(alphabet="abc", min_size=1, max_size=7),
           st.floats(min_value=0.0, max_value=3.0))
    @settings(max_examples=60, deadline=None)
    def test_partition_dominates_every_segmentation(raw, alpha):
        lat = build_lattice(raw, TOY)
        z = lat.log_partition(alpha)
        for seg in lat.iter_segmentations():
            assert alpha * seg.log_weight <= z + 1e-9

    @given(st.text(alphabet="ab", min_size=1, max_size=7))
    @settings(max_examples=40, deadline=None)
    def test_viterbi_is_argmax_of_enumeration(raw):
        lat = build_lattice(raw, TOY)
        best = max(lat.iter_segmentations(), key=lambda s: s.log_weight)
        assert lat.viterbi().log_weight == pytest.approx(best.log_weight)
except ImportError:  # hypothesis is an optional test dependency
    pass
