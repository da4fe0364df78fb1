"""Scoring models: exact table lookups, GRU forward consistency, checkpoint
format, and analytic gradients vs central finite differences."""

import math

import numpy as np
import pytest

from multiseg import (BOS, EOS, Batch, LookupModel, NeuralModel,
                      load_checkpoint, load_model, save_checkpoint)
from multiseg.models import (sequence_log_prob, step_scores,
                             training_loss_and_gradients)


def small_model(**kw):
    kw.setdefault("emb_dim", 4)
    kw.setdefault("hidden_dim", 6)
    return NeuralModel(8, 8, **kw)


def toy_batch():
    return Batch(
        src=np.array([[4, 5, 6], [5, 4, 0]], dtype=np.int64),
        src_mask=np.array([[1, 1, 1], [1, 1, 0]], dtype=np.float64),
        tgt_in=np.array([[1, 6, 7], [1, 5, 0]], dtype=np.int64),
        tgt_out=np.array([[6, 7, 2], [5, 2, 0]], dtype=np.int64),
        tgt_mask=np.array([[1, 1, 1], [1, 1, 0]], dtype=np.float64),
    )


class TestLookupModel:
    def test_table_read_back(self):
        lm = LookupModel(8, table={((7,), (BOS,)): {5: 0.9, EOS: 0.1}})
        enc = lm.encode((7,))
        scores = step_scores(lm, enc, (BOS,))
        assert scores[5] == pytest.approx(math.log(0.9), abs=1e-12)
        assert scores[EOS] == pytest.approx(math.log(0.1), abs=1e-12)
        assert scores[4] == -math.inf

    def test_default_distribution_off_table(self):
        lm = LookupModel(8, table={}, default={4: 0.5, EOS: 0.5})
        scores = step_scores(lm, lm.encode((7,)), (BOS,))
        assert scores[4] == pytest.approx(math.log(0.5), abs=1e-12)
        assert scores[EOS] == pytest.approx(math.log(0.5), abs=1e-12)

    def test_uniform_without_default(self):
        lm = LookupModel(8)
        scores = step_scores(lm, lm.encode((7,)), (BOS,))
        np.testing.assert_allclose(scores, math.log(1 / 8), atol=1e-12)

    def test_sequence_composition_exact(self):
        table = {
            ((7,), (BOS,)): {5: 0.9, EOS: 0.1},
            ((7,), (BOS, 5)): {EOS: 1.0},
        }
        lm = LookupModel(8, table=table)
        got = sequence_log_prob(lm, (7,), (5, EOS))
        assert got == pytest.approx(math.log(0.9), abs=1e-12)

    def test_distributions_must_normalize(self):
        with pytest.raises(ValueError):
            LookupModel(8, table={((7,), (BOS,)): {5: 0.5}})
        with pytest.raises(ValueError):
            LookupModel(8, default={99: 1.0})

    def test_encode_is_identity_on_tokens(self):
        lm = LookupModel(8)
        enc = lm.encode((7, 5, 4))
        assert tuple(enc.src_ids) == (7, 5, 4)

    def test_json_round_trip(self, tmp_path):
        lm = LookupModel(8, table={((7,), (BOS,)): {5: 0.25, EOS: 0.75}},
                         default={EOS: 1.0})
        path = tmp_path / "m.json"
        lm.save(path)
        back = load_model(path)
        assert isinstance(back, LookupModel)
        for tgt in ((5, EOS), (EOS,)):
            assert (sequence_log_prob(back, (7,), tgt)
                    == sequence_log_prob(lm, (7,), tgt))


class TestNeuralModel:
    def test_zero_init_is_uniform(self):
        m = NeuralModel(10, 10, emb_dim=4, hidden_dim=6, zero_init=True)
        scores = step_scores(m, m.encode((4, 5)), (BOS,))
        np.testing.assert_allclose(scores, math.log(1 / 10), atol=1e-6)

    def test_encoder_output_length(self):
        m = small_model(seed=1)
        enc = m.encode((4, 5, 6, 7))
        assert enc.outputs.shape[0] == 4

    def test_encode_deterministic(self):
        m = small_model(seed=2)
        s1 = step_scores(m, m.encode((4, 5)), (BOS, 6))
        s2 = step_scores(m, m.encode((4, 5)), (BOS, 6))
        np.testing.assert_array_equal(s1, s2)

    def test_scores_are_log_distribution(self):
        m = small_model(seed=3)
        scores = step_scores(m, m.encode((4, 6)), (BOS,))
        assert math.fsum(np.exp(scores)) == pytest.approx(1.0, abs=1e-9)

    def test_steps_compose_to_sequence_log_prob(self):
        m = small_model(seed=4)
        src, tgt = (4, 5, 6), (7, 5, EOS)
        total = 0.0
        prefix = (BOS,)
        enc = m.encode(src)
        for tok in tgt:
            total += step_scores(m, enc, prefix)[tok]
            prefix = prefix + (tok,)
        assert sequence_log_prob(m, src, tgt) == pytest.approx(total, abs=1e-9)

    def test_eos_appended_when_missing(self):
        m = small_model(seed=4)
        assert (sequence_log_prob(m, (4,), (5,))
                == sequence_log_prob(m, (4,), (5, EOS)))

    def test_init_is_seeded_and_bounded(self):
        a = small_model(seed=7)
        b = small_model(seed=7)
        c = small_model(seed=8)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
            assert np.all(np.abs(a.params[k]) <= 0.08)
        assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        m = NeuralModel(10, 12, emb_dim=4, hidden_dim=6, seed=3)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        back = load_checkpoint(path)
        assert back.params.keys() == m.params.keys()
        for k in m.params:
            np.testing.assert_array_equal(back.params[k], m.params[k])
            assert back.params[k].dtype == np.float32

    def test_probe_scores_survive_round_trip(self, tmp_path):
        m = small_model(seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        back = load_model(path)
        assert (sequence_log_prob(back, (4, 5), (6, EOS))
                == sequence_log_prob(m, (4, 5), (6, EOS)))

    def test_corrupted_magic_rejected(self, tmp_path):
        m = small_model(seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        m = small_model(seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        m = small_model(seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(m, path)
        path.write_bytes(path.read_bytes() + b"XX")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_rewrite_is_byte_identical(self, tmp_path):
        m = small_model(seed=9)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(m, p1)
        save_checkpoint(m, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestTrainingLossAndGradients:
    def test_uniform_loss_is_log_vocab(self):
        m = NeuralModel(8, 10, emb_dim=4, hidden_dim=6, zero_init=True)
        batch = toy_batch()
        loss, _ = training_loss_and_gradients(m, batch)
        assert loss == pytest.approx(math.log(10), abs=1e-6)

    def test_pad_positions_do_not_affect_loss(self):
        m = small_model(seed=11)
        batch = toy_batch()
        loss, _ = training_loss_and_gradients(m, batch)
        batch.tgt_out[1, 2] = 7  # masked slot
        loss2, _ = training_loss_and_gradients(m, batch)
        assert loss2 == loss

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        m = small_model(seed=1)
        batch = toy_batch()
        _, grads = training_loss_and_gradients(m, batch)
        eps = 1e-4
        assert grads.keys() == m.params.keys()
        for name, grad in grads.items():
            flat = m.params[name].reshape(-1)
            gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
            assert gflat.size == flat.size
            picks = rng.choice(flat.size, size=min(5, flat.size), replace=False)
            for i in picks:
                orig = flat[i]
                flat[i] = orig + eps
                up, _ = training_loss_and_gradients(m, batch)
                flat[i] = orig - eps
                down, _ = training_loss_and_gradients(m, batch)
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                denom = max(abs(numeric), abs(gflat[i]), 1e-4)
                assert abs(numeric - gflat[i]) <= 1e-3 * denom, f"{name}[{i}]"

    def test_label_smoothing_changes_loss(self):
        m = small_model(seed=12)
        batch = toy_batch()
        plain, _ = training_loss_and_gradients(m, batch)
        smoothed, _ = training_loss_and_gradients(m, batch, label_smoothing=0.1)
        assert smoothed != plain

    def test_non_finite_loss_raises(self):
        m = small_model(seed=13)
        m.params["out_b"][:] = np.float32("nan")
        with pytest.raises(FloatingPointError):
            training_loss_and_gradients(m, toy_batch())
