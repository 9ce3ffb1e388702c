from types import SimpleNamespace

import numpy as np
import pytest

from kgbench.core import Dataset, Triple
from kgbench.errors import InvalidKError, NonFiniteGradientError, UnknownPresetError
from kgbench.models import MODEL_TAGS, ModelParams, init_params
from kgbench.training import (
    BernoulliStats,
    OptimizerState,
    TrainConfig,
    batch_size_for,
    bce_1n_loss_and_grads,
    loss_and_grads,
    logistic_loss_and_grads,
    margin_loss_and_grads,
    optimizer_step,
    preset,
    preset_table,
    sample_negatives,
    train,
)

from helpers import assert_close_grad, block_kg, dense_gradient, fd_loss_gradient, tiny_vocab


def base_cfg(**kw):
    defaults = dict(model="transe", epochs=1, learning_rate=0.1, dim_e=4, num_batches=1)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestPresets:
    def test_transe_openbg500(self):
        cfg = preset("transe", "openbg500")
        assert cfg.num_batches == 100
        assert cfg.epochs == 1000
        assert cfg.learning_rate == 0.5
        assert cfg.dim_e == 200
        assert cfg.optimizer == "sgd"

    def test_transd_openbg500_l(self):
        cfg = preset("transd", "openbg500-l")
        assert cfg.num_batches == 1000
        assert cfg.epochs == 1000
        assert cfg.learning_rate == 1.0
        assert cfg.dim_e == 200
        assert cfg.optimizer == "sgd"

    def test_tucker_openbg_img(self):
        cfg = preset("tucker", "openbg-img")
        assert cfg.batch_size == 200
        assert cfg.num_batches is None
        assert cfg.epochs == 500
        assert cfg.learning_rate == 5e-4
        assert cfg.dim_e == 200
        assert cfg.loss == "bce"

    def test_unknown_preset(self):
        with pytest.raises(UnknownPresetError):
            preset("tucker", "openbg500-l")

    def test_adagrad_for_bilinear(self):
        assert preset("distmult", "openbg500").optimizer == "adagrad"
        assert preset("complex", "openbg500-l").optimizer == "adagrad"

    def test_table_is_complete(self):
        rows = preset_table()
        assert len(rows) == 17  # 6 + 6 + 5 published configurations


class TestConfigValidation:
    def test_exactly_one_batch_setting(self):
        with pytest.raises(ValueError):
            TrainConfig(model="transe", epochs=1, learning_rate=0.1, num_batches=2, batch_size=5)
        with pytest.raises(ValueError):
            TrainConfig(model="transe", epochs=1, learning_rate=0.1)

    def test_learning_rate_positive(self):
        with pytest.raises(ValueError):
            base_cfg(learning_rate=0.0)

    def test_label_smoothing_range(self):
        with pytest.raises(ValueError):
            base_cfg(label_smoothing=1.0)

    def test_json_roundtrip(self):
        cfg = base_cfg(loss="bce", dropout=(0.1, 0.2, 0.3))
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestSampleNegatives:
    def test_enumeration_small_pool(self, rng):
        known = {Triple(0, 0, 1)}
        for _ in range(50):
            (neg,) = sample_negatives(Triple(0, 0, 1), 1, "uniform", known, 3, rng)
            assert neg in {Triple(0, 0, 0), Triple(0, 0, 2), Triple(1, 0, 1), Triple(2, 0, 1)}
            assert neg != Triple(0, 0, 1)

    def test_k_zero_invalid(self, rng):
        with pytest.raises(InvalidKError):
            sample_negatives(Triple(0, 0, 1), 0, "uniform", set(), 3, rng)

    def test_relation_never_corrupted(self, rng):
        for _ in range(100):
            (neg,) = sample_negatives(Triple(0, 1, 2), 1, "uniform", set(), 5, rng)
            assert neg.relation == 1

    def test_head_tail_split_within_3_sigma(self, rng):
        n = 10_000
        heads = 0
        for _ in range(n):
            (neg,) = sample_negatives(Triple(0, 0, 1), 1, "uniform", set(), 3, rng)
            heads += neg.head != 0
        sigma = np.sqrt(n * 0.25)
        assert abs(heads - n / 2) <= 3 * sigma

    def test_collision_accepted_after_cap_with_warning(self, rng, caplog):
        # Every corruption collides: entities {0,1}, both triples known.
        known = {Triple(0, 0, 1), Triple(1, 0, 1), Triple(0, 0, 0)}
        import logging

        with caplog.at_level(logging.WARNING, logger="kgbench.training"):
            (neg,) = sample_negatives(Triple(0, 0, 1), 1, "uniform", known, 2, rng)
        assert neg != Triple(0, 0, 1)
        assert any("exhausted" in rec.message for rec in caplog.records)

    def test_bernoulli_uses_relation_stats(self, rng):
        # Relation 0 is extremely 1-to-N (tph >> hpt): corrupt heads mostly.
        triples = [Triple(0, 0, t) for t in range(1, 50)]
        stats = BernoulliStats(triples)
        assert stats.head_probability(0) > 0.9
        heads = 0
        n = 2000
        for _ in range(n):
            (neg,) = sample_negatives(Triple(0, 0, 1), 1, "bernoulli", set(), 60, rng, stats)
            heads += neg.head != 0
        assert heads / n > 0.85


class TestLosses:
    def test_margin_inactive(self):
        p = init_params("distmult", 4, 2, 3, seed=0, dtype=np.float64)
        p.ent[:] = 0.0
        p.ent[0, 0] = 5.0
        p.ent[1, 0] = 1.0
        p.ent[2, 0] = 1.0 / 5.0
        p.rel[:] = 0.0
        p.rel[0, 0] = 1.0
        # f(pos) = 5, f(neg) = 1: margin 1 term is inactive.
        loss, grads = margin_loss_and_grads(
            [Triple(0, 0, 1)], [Triple(2, 0, 1)], p, margin=1.0
        )
        assert loss == 0.0

    def test_margin_boundary(self):
        p = init_params("distmult", 4, 2, 3, seed=0, dtype=np.float64)
        p.ent[:] = 0.0
        p.rel[:] = 0.0
        # f(pos) = f(neg) = 0: term is exactly the margin.
        loss, _ = margin_loss_and_grads([Triple(0, 0, 1)], [Triple(2, 0, 1)], p, margin=1.0)
        assert loss == 1.0

    def test_logistic_value(self):
        p = init_params("distmult", 3, 1, 2, seed=1, dtype=np.float64)
        pos, neg = [Triple(0, 0, 1)], [Triple(2, 0, 1)]
        loss, _ = logistic_loss_and_grads(pos, neg, p, reg_lambda=0.0)
        f = lambda t: float(np.sum(p.ent[t.head] * p.rel[t.relation] * p.ent[t.tail]))
        expected = np.log1p(np.exp(-f(pos[0]))) + np.log1p(np.exp(f(neg[0])))
        assert loss == pytest.approx(expected, rel=1e-12)


class TestLossGradients:
    LOSSES = ("margin", "logistic", "bce")

    @pytest.mark.parametrize("tag", MODEL_TAGS)
    @pytest.mark.parametrize("loss", LOSSES)
    def test_all_models_all_losses(self, tag, loss):
        rng = np.random.default_rng(17)
        d_r = 3 if tag in ("transd", "tucker") else 4
        p = init_params(tag, 5, 2, 4, d_r, seed=8, dtype=np.float64)
        for _name, arr in p.tensors():
            arr += rng.normal(scale=0.2, size=arr.shape)
        cfg = base_cfg(model=tag, loss=loss, margin=1.0, reg_lambda=1e-3,
                       label_smoothing=0.1)
        positives = [Triple(0, 0, 1), Triple(2, 1, 3)]
        negatives = [Triple(0, 0, 4), Triple(4, 1, 3)]

        loss_val, grads = loss_and_grads(positives, negatives, p, cfg)
        assert np.isfinite(loss_val)
        for name, _arr in p.tensors():
            fd = fd_loss_gradient(
                lambda: loss_and_grads(positives, negatives, p, cfg)[0], p, name
            )
            assert_close_grad(dense_gradient(grads, p, name), fd)

    def test_tucker_dropout_path_gradcheck(self):
        # Re-seeding the rng before every evaluation freezes the masks, which
        # makes the dropout loss deterministic and finite-difference checkable.
        p = init_params("tucker", 5, 2, 4, 3, seed=8, dtype=np.float64)
        noise = np.random.default_rng(18)
        for _name, arr in p.tensors():
            arr += noise.normal(scale=0.2, size=arr.shape)
        positives = [Triple(0, 0, 1), Triple(2, 1, 3)]

        def run():
            return bce_1n_loss_and_grads(
                positives, p, label_smoothing=0.1, dropout=(0.3, 0.4, 0.5),
                rng=np.random.default_rng(555),
            )

        _loss, grads = run()
        for name, _arr in p.tensors():
            fd = fd_loss_gradient(lambda: run()[0], p, name)
            assert_close_grad(dense_gradient(grads, p, name), fd)


class TestOptimizer:
    def _mk(self, theta):
        p = ModelParams(
            tag="distmult",
            ent=np.array([theta], dtype=np.float64),
            rel=np.zeros((1, len(theta))),
        )
        return p

    def _grads(self, g):
        from kgbench.models import SparseGrads

        return SparseGrads({"ent": (np.array([0]), np.array([g], dtype=np.float64))})

    def test_sgd_single_step(self):
        p = self._mk([1.0])
        optimizer_step(p, self._grads([2.0]), OptimizerState(), base_cfg(model="distmult"))
        assert p.ent[0, 0] == pytest.approx(0.8)

    def test_adagrad_single_step(self):
        p = self._mk([0.0])
        state = OptimizerState()
        cfg = base_cfg(model="distmult", optimizer="adagrad", learning_rate=1.0)
        optimizer_step(p, self._grads([3.0]), state, cfg)
        assert state.acc["ent"][0, 0] == pytest.approx(9.0)
        assert p.ent[0, 0] == pytest.approx(-3.0 / (3.0 + 1e-8))

    def test_nan_gradient_rejected(self):
        p = self._mk([1.0])
        with pytest.raises(NonFiniteGradientError):
            optimizer_step(p, self._grads([np.nan]), OptimizerState(), base_cfg(model="distmult"))

    def test_zero_learning_rate_is_a_no_op(self):
        # TrainConfig forbids lr=0, so the property is exercised on the
        # optimizer op directly.
        p = self._mk([1.0])
        before = p.ent.copy()
        cfg = SimpleNamespace(learning_rate=0.0, optimizer="sgd")
        optimizer_step(p, self._grads([2.0]), OptimizerState(), cfg)
        np.testing.assert_array_equal(p.ent, before)

    def test_constraints_reimposed_on_touched_rows(self):
        p = ModelParams(
            tag="transe",
            ent=np.array([[0.6, 0.8], [0.0, 1.0]], dtype=np.float64),
            rel=np.zeros((1, 2)),
        )
        from kgbench.models import SparseGrads

        grads = SparseGrads({"ent": (np.array([0]), np.array([[-3.0, -4.0]]))})
        optimizer_step(p, grads, OptimizerState(), base_cfg(learning_rate=1.0))
        assert np.linalg.norm(p.ent[0]) == pytest.approx(1.0)
        np.testing.assert_array_equal(p.ent[1], [0.0, 1.0])


def small_dataset():
    triples = [
        Triple(0, 0, 1), Triple(1, 0, 2), Triple(2, 0, 3), Triple(3, 0, 0),
        Triple(0, 1, 2), Triple(1, 1, 3), Triple(2, 1, 0), Triple(3, 1, 1),
    ]
    return Dataset.build(tiny_vocab(4, 2), triples)


class TestTrainLoop:
    def test_zero_epochs_returns_init_exactly(self):
        d = small_dataset()
        cfg = base_cfg(epochs=0, seed=3)
        params, curve = train(d, cfg)
        ref = init_params("transe", 4, 2, 4, seed=3)
        assert curve == []
        for (name, a), (_n, b) in zip(params.tensors(), ref.tensors()):
            assert a.tobytes() == b.tobytes(), name

    def test_batch_size_arithmetic(self):
        cfg = base_cfg(num_batches=100)
        assert batch_size_for(1000, cfg) == 10
        assert batch_size_for(1001, cfg) == 11

    def test_deterministic_given_seed(self):
        d = small_dataset()
        cfg = base_cfg(epochs=3, seed=11)
        p1, c1 = train(d, cfg)
        p2, c2 = train(d, cfg)
        assert c1 == c2
        for (name, a), (_n, b) in zip(p1.tensors(), p2.tensors()):
            assert a.tobytes() == b.tobytes(), name

    @pytest.mark.parametrize(
        "model,loss,optimizer",
        [("transe", "margin", "sgd"), ("distmult", "logistic", "adagrad")],
    )
    def test_loss_decreases_on_structured_graph(self, model, loss, optimizer):
        d = block_kg(n_blocks=4, block_size=3, n_rel=3, holdout=0.0, seed=1)
        cfg = TrainConfig(
            model=model, epochs=60, learning_rate=0.05, dim_e=8,
            num_batches=4, optimizer=optimizer, loss=loss, seed=0,
        )
        _params, curve = train(d, cfg)
        assert np.mean(curve[-5:]) < 0.8 * np.mean(curve[:5])

    def test_adagrad_accumulators_monotone(self):
        d = small_dataset()
        cfg = base_cfg(model="distmult", loss="logistic", optimizer="adagrad",
                       epochs=2, seed=5)
        # Drive optimizer_step manually to watch the accumulators.
        params = init_params("distmult", 4, 2, 4, seed=5, dtype=np.float64)
        state = OptimizerState()
        prev = None
        rng = np.random.default_rng(0)
        for _ in range(10):
            pos = [d.train[int(rng.integers(0, len(d.train)))]]
            neg = sample_negatives(pos[0], 1, "uniform", set(d.train), 4, rng)
            _loss, grads = loss_and_grads(pos, neg, params, cfg)
            optimizer_step(params, grads, state, cfg)
            total = sum(float(a.sum()) for a in state.acc.values())
            if prev is not None:
                assert total >= prev
            prev = total

    def test_bce_training_runs(self):
        d = small_dataset()
        cfg = base_cfg(model="tucker", loss="bce", optimizer="adagrad",
                       learning_rate=0.05, dim_e=4, dim_r=3, epochs=5, seed=2)
        params, curve = train(d, cfg)
        assert len(curve) == 5
        assert all(np.isfinite(v) for v in curve)
