import numpy as np
import pytest

from kgbench.core import Triple
from kgbench.errors import DimMismatchError, UnknownModelError
from kgbench.models import (
    MODEL_TAGS,
    ModelParams,
    candidate_scores,
    grad,
    head_scores,
    init_params,
    project_constraints,
    score,
    scores_for,
    tail_scores,
    validate_params,
)

from helpers import assert_close_grad, dense_gradient, fd_loss_gradient


def random_params(tag, seed, n_ent=6, n_rel=3, d_e=5):
    """Generic-position double-precision params (init + noise)."""
    d_r = 4 if tag in ("transd", "tucker") else d_e
    p = init_params(tag, n_ent, n_rel, d_e, d_r, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    for _name, arr in p.tensors():
        arr += rng.normal(scale=0.2, size=arr.shape)
    return p


def manual_params(tag, ent, rel, **extras):
    kwargs = {
        name: np.asarray(arr, dtype=np.float64)
        for name, arr in [("ent", ent), ("rel", rel)] + list(extras.items())
    }
    return ModelParams(tag=tag, **kwargs)


class TestScoreExamples:
    def test_transe_l1_zero_distance(self):
        p = manual_params("transe", [[1, 0], [1, 1]], [[0, 1]])
        assert score(p, Triple(0, 0, 1), transe_p=1) == 0.0

    def test_distmult_direct(self):
        p = manual_params("distmult", [[1, 2], [3, 1]], [[1, 1]])
        assert score(p, Triple(0, 0, 1)) == 5.0

    def test_complex_reduces_to_distmult_when_imag_zero(self):
        p = manual_params(
            "complex",
            [[1, 2], [3, 1]],
            [[1, 1]],
            ent_im=[[0, 0], [0, 0]],
            rel_im=[[0, 0]],
        )
        assert score(p, Triple(0, 0, 1)) == 5.0

    def test_tucker_superdiagonal_reduces_to_distmult(self):
        core = np.zeros((2, 2, 2))
        for i in range(2):
            core[i, i, i] = 1.0
        p = manual_params("tucker", [[1, 2], [3, 1]], [[1, 1]], core=core)
        assert score(p, Triple(0, 0, 1)) == 5.0

    def test_transd_zero_projections_equals_transe_l2_squared(self):
        rng = np.random.default_rng(3)
        ent = rng.normal(size=(4, 3))
        rel = rng.normal(size=(2, 3))
        p = manual_params(
            "transd", ent, rel, ent_proj=np.zeros((4, 3)), rel_proj=np.zeros((2, 3))
        )
        pe = manual_params("transe", ent, rel)
        for t in [Triple(0, 0, 1), Triple(2, 1, 3)]:
            l2 = -score(pe, t)
            assert score(p, t) == pytest.approx(-(l2**2), abs=1e-12)


class TestGradExamples:
    def test_distmult_head_gradient(self):
        p = manual_params("distmult", [[1, 2], [3, 1]], [[1, 1]])
        g = grad(p, Triple(0, 0, 1))
        np.testing.assert_allclose(g.row("ent", 0), [3.0, 1.0])

    def test_transe_l2_relation_gradient(self):
        p = manual_params("transe", [[0, 0]], [[3, 4]])
        g = grad(p, Triple(0, 0, 0))
        np.testing.assert_allclose(g.row("rel", 0), [-0.6, -0.8])

    def test_self_loop_gradients_accumulate(self):
        # head == tail: contributions to the shared entity row must sum.
        p = random_params("distmult", 11)
        t = Triple(2, 1, 2)
        g = grad(p, t)

        def loss():
            return score(p, t)

        fd = fd_loss_gradient(loss, p, "ent")
        assert_close_grad(dense_gradient(g, p, "ent"), fd)


class TestFiniteDifferences:
    @pytest.mark.parametrize("tag", MODEL_TAGS)
    @pytest.mark.parametrize("transe_p", [1, 2])
    def test_score_gradients(self, tag, transe_p):
        if transe_p == 1 and tag != "transe":
            pytest.skip("p only affects transe")
        rng = np.random.default_rng(99)
        for point in range(20):
            p = random_params(tag, seed=point)
            t = Triple(
                int(rng.integers(0, 6)), int(rng.integers(0, 3)), int(rng.integers(0, 6))
            )
            g = grad(p, t, transe_p=transe_p)
            for name, _arr in p.tensors():
                fd = fd_loss_gradient(lambda: score(p, t, transe_p=transe_p), p, name)
                assert_close_grad(dense_gradient(g, p, name), fd)


class TestCandidateScoring:
    @pytest.mark.parametrize("tag", MODEL_TAGS)
    def test_matches_per_triple_scores(self, tag):
        p = random_params(tag, seed=5)
        t = Triple(1, 2, 4)
        tails = tail_scores(p, t.head, t.relation)
        heads = head_scores(p, t.relation, t.tail)
        for e in range(p.num_entities):
            assert tails[e] == pytest.approx(score(p, Triple(t.head, t.relation, e)), rel=1e-12, abs=1e-12)
            assert heads[e] == pytest.approx(score(p, Triple(e, t.relation, t.tail)), rel=1e-12, abs=1e-12)

    def test_transe_l1_candidates(self):
        p = random_params("transe", seed=6)
        t = Triple(0, 1, 2)
        tails = candidate_scores(p, "tail", t, transe_p=1)
        for e in range(p.num_entities):
            assert tails[e] == pytest.approx(score(p, Triple(0, 1, e), transe_p=1))


class TestReductionIdentities:
    def test_complex_equals_distmult_on_zero_imag(self):
        rng = np.random.default_rng(0)
        ent = rng.normal(size=(8, 6))
        rel = rng.normal(size=(4, 6))
        pc = manual_params(
            "complex", ent, rel, ent_im=np.zeros((8, 6)), rel_im=np.zeros((4, 6))
        )
        pd = manual_params("distmult", ent, rel)
        for _ in range(50):
            t = Triple(int(rng.integers(0, 8)), int(rng.integers(0, 4)), int(rng.integers(0, 8)))
            assert abs(score(pc, t) - score(pd, t)) < 1e-12

    def test_tucker_superdiagonal_equals_distmult(self):
        rng = np.random.default_rng(1)
        d = 5
        ent = rng.normal(size=(8, d))
        rel = rng.normal(size=(4, d))
        core = np.zeros((d, d, d))
        for i in range(d):
            core[i, i, i] = 1.0
        pt = manual_params("tucker", ent, rel, core=core)
        pd = manual_params("distmult", ent, rel)
        for _ in range(50):
            t = Triple(int(rng.integers(0, 8)), int(rng.integers(0, 4)), int(rng.integers(0, 8)))
            assert abs(score(pt, t) - score(pd, t)) < 1e-12

    def test_transe_translation_invariance(self):
        rng = np.random.default_rng(2)
        p = random_params("transe", seed=12, n_ent=8, n_rel=4, d_e=6)
        shifted = p.copy()
        shifted.ent += rng.normal(size=(1, 6))  # same constant row added everywhere
        for _ in range(50):
            t = Triple(int(rng.integers(0, 8)), int(rng.integers(0, 4)), int(rng.integers(0, 8)))
            assert abs(score(p, t) - score(shifted, t)) < 1e-12

    def test_transh_orthogonal_pair_equals_transe_l2_squared(self):
        # Vectors orthogonal to w are untouched by the hyperplane projection.
        w = np.array([0.0, 0.0, 1.0])
        ent = np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 0.0]])
        rel = np.array([[0.3, 0.4, 0.0]])
        ph = manual_params("transh", ent, rel, norm=[w])
        pe = manual_params("transe", ent, rel)
        t = Triple(0, 0, 1)
        l2 = -score(pe, t)
        assert score(ph, t) == pytest.approx(-(l2**2), abs=1e-12)


class TestConstraints:
    def test_entity_row_scaled_to_unit(self):
        p = manual_params("transe", [[3.0, 4.0]], [[0.0, 0.0]])
        project_constraints(p, {"ent": np.array([0])})
        np.testing.assert_allclose(p.ent[0], [0.6, 0.8])

    def test_row_inside_ball_unchanged(self):
        p = manual_params("transe", [[0.3, 0.4]], [[0.0, 0.0]])
        before = p.ent.copy()
        project_constraints(p, {"ent": np.array([0])})
        np.testing.assert_array_equal(p.ent, before)

    def test_transh_normal_renormalized(self):
        p = manual_params(
            "transh", [[1.0, 0.0]], [[0.0, 0.0]], norm=[[0.0, 2.0]]
        )
        project_constraints(p, {"norm": np.array([0])})
        np.testing.assert_allclose(p.norm[0], [0.0, 1.0])

    def test_noop_for_bilinear_models(self):
        p = manual_params("distmult", [[3.0, 4.0]], [[5.0, 5.0]])
        before = p.ent.copy()
        project_constraints(p)
        np.testing.assert_array_equal(p.ent, before)

    def test_untouched_rows_left_alone(self):
        p = manual_params("transe", [[3.0, 4.0], [5.0, 12.0]], [[0.0, 0.0]])
        project_constraints(p, {"ent": np.array([0])})
        np.testing.assert_allclose(p.ent[1], [5.0, 12.0])


class TestInit:
    @staticmethod
    def _dims(tag):
        return (8, 6) if tag in ("transd", "tucker") else (8, 8)

    @pytest.mark.parametrize("tag", MODEL_TAGS)
    def test_deterministic_per_seed(self, tag):
        d_e, d_r = self._dims(tag)
        a = init_params(tag, 10, 4, d_e, d_r, seed=3)
        b = init_params(tag, 10, 4, d_e, d_r, seed=3)
        for (name, x), (_n, y) in zip(a.tensors(), b.tensors()):
            assert x.tobytes() == y.tobytes(), name

    @pytest.mark.parametrize("tag", MODEL_TAGS)
    def test_seeds_differ(self, tag):
        d_e, d_r = self._dims(tag)
        a = init_params(tag, 10, 4, d_e, d_r, seed=3)
        b = init_params(tag, 10, 4, d_e, d_r, seed=4)
        assert any(
            x.tobytes() != y.tobytes() for (_, x), (_, y) in zip(a.tensors(), b.tensors())
        )

    def test_bounds(self):
        p = init_params("distmult", 50, 10, 16, seed=0)
        bound = 6.0 / np.sqrt(16)
        assert np.all(np.abs(p.ent) <= bound) and np.all(np.abs(p.rel) <= bound)
        pt = init_params("tucker", 5, 3, 4, 6, seed=0)
        assert np.all(np.abs(pt.core) <= 1.0 / 6)

    def test_constrained_models_start_normalized(self):
        p = init_params("transh", 10, 4, 8, seed=1)
        np.testing.assert_allclose(np.linalg.norm(p.ent, axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(np.linalg.norm(p.norm, axis=1), 1.0, atol=1e-6)


class TestValidation:
    def test_missing_extra_tensor(self):
        p = manual_params("transe", [[1.0, 0.0]], [[0.0, 1.0]])
        p.tag = "transh"
        with pytest.raises(DimMismatchError):
            validate_params(p)

    def test_dim_mismatch_for_additive_model(self):
        p = ModelParams(
            tag="transe",
            ent=np.zeros((2, 3)),
            rel=np.zeros((1, 4)),
        )
        with pytest.raises(DimMismatchError):
            validate_params(p)

    def test_unknown_tag(self):
        with pytest.raises(UnknownModelError):
            init_params("rescal", 2, 1, 4)

    def test_score_validates(self):
        p = ModelParams(tag="transe", ent=np.zeros((2, 3)), rel=np.zeros((1, 4)))
        with pytest.raises(DimMismatchError):
            scores_for(p, np.array([0]), np.array([0]), np.array([1]))
