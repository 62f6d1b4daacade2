import math

import numpy as np
import pytest

from ctxwindow.errors import LossInputError
from ctxwindow.numerics import (TargetSequence, build_mid_mask, extend_positional_embeddings,
                                masked_loss, masked_loss_grad, per_token_ce, plan_concatenation,
                                smooth_targets, softmax, token_ce)

from oracles import fsum_ce, scalar_masked_loss


def random_instance(rng, n=7, vocab=5, scale=3.0):
    logits = rng.normal(0, scale, size=(n, vocab))
    tokens = tuple(int(x) for x in rng.integers(0, vocab, size=n))
    t_mid = int(rng.integers(0, n))
    t_right = int(rng.integers(t_mid + 1, n + 1))
    return logits, TargetSequence(tokens, t_mid, t_right)


def test_smooth_targets():
    assert np.array_equal(smooth_targets(1, 0.0, 3), [0.0, 1.0, 0.0])
    assert np.allclose(smooth_targets(2, 0.1, 4), [0.025, 0.025, 0.925, 0.025], atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = int(rng.integers(1, 50))
        p = smooth_targets(int(rng.integers(0, v)), float(rng.uniform(0, 0.99)), v)
        assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(LossInputError):
        smooth_targets(4, 0.1, 4)
    with pytest.raises(LossInputError):
        smooth_targets(0, 1.0, 4)


def test_token_ce():
    p = np.array([0.0, 1.0, 0.0, 0.0])
    assert token_ce(p, p) == 0.0
    q = np.full(4, 0.25)
    for p in (smooth_targets(0, 0.3, 4), np.array([0.1, 0.2, 0.3, 0.4])):
        assert token_ce(p, q) == pytest.approx(math.log(4), abs=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(200):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6) * 0.3)
        assert abs(token_ce(p, q) - fsum_ce(p, q)) < 1e-12


def test_mask():
    assert build_mid_mask(TargetSequence((0,) * 5, 1, 4)).tolist() == [0, 1, 1, 1, 0]
    assert build_mid_mask(TargetSequence((0,) * 5, 0, 5)).tolist() == [1] * 5
    with pytest.raises(LossInputError):
        TargetSequence((0,) * 5, 2, 2)


def test_from_markers():
    t = TargetSequence.from_markers([9, 7, 1, 2, 8, 3], mid_id=7, right_id=8)
    assert (t.t_mid, t.t_right) == (1, 4)


def test_uniform_logits_give_log_v():
    t = TargetSequence((0, 1, 2, 3, 1), 1, 4)
    assert masked_loss(np.zeros((5, 4)), t, 0.1) == pytest.approx(math.log(4), abs=1e-12)
    assert masked_loss(np.full((5, 4), 7.5), t, 0.0) == pytest.approx(math.log(4), abs=1e-12)


def test_near_one_hot_is_near_zero():
    tokens = (2, 0, 1, 3)
    logits = np.full((4, 4), -40.0)
    logits[np.arange(4), tokens] = 40.0
    assert masked_loss(logits, TargetSequence(tokens, 1, 3), 0.0) < 1e-6


def test_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        logits, t = random_instance(rng)
        eps = float(rng.uniform(0, 0.5))
        want = scalar_masked_loss(logits, t.tokens, t.t_mid, t.t_right, eps)
        assert abs(masked_loss(logits, t, eps) - want) < 1e-10


def test_masked_rows_do_not_matter():
    rng = np.random.default_rng(3)
    for _ in range(50):
        logits, t = random_instance(rng)
        base = masked_loss(logits, t)
        poked = logits.copy()
        outside = [i for i in range(len(t.tokens)) if not t.t_mid <= i < t.t_right]
        for i in outside:
            poked[i] = rng.normal(0, 10, size=logits.shape[1])
        assert masked_loss(poked, t) == base


def test_analytic_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    h = 1e-5
    for _ in range(20):
        logits, t = random_instance(rng, n=6, vocab=4, scale=1.0)
        g = masked_loss_grad(logits, t, 0.1)
        for i in range(logits.shape[0]):
            for j in range(logits.shape[1]):
                up, dn = logits.copy(), logits.copy()
                up[i, j] += h
                dn[i, j] -= h
                fd = (masked_loss(up, t, 0.1) - masked_loss(dn, t, 0.1)) / (2 * h)
                assert abs(fd - g[i, j]) < 1e-6
                if not t.t_mid <= i < t.t_right:
                    assert fd == 0.0 and g[i, j] == 0.0


def test_bad_inputs():
    t = TargetSequence((0, 1), 0, 2)
    with pytest.raises(LossInputError, match="shape"):
        masked_loss(np.zeros((3, 4)), t)
    with pytest.raises(LossInputError, match="non-finite"):
        masked_loss(np.array([[0.0, np.nan], [0.0, 0.0]]), t)
    with pytest.raises(LossInputError, match="vocabulary"):
        masked_loss(np.zeros((2, 1)), t)


def test_extreme_logits_stay_finite():
    t = TargetSequence((0, 1), 0, 2)
    logits = np.array([[1e4, -1e4], [1e4, -1e4]])
    loss = masked_loss(logits, t, 0.1)
    assert math.isfinite(loss)
    assert per_token_ce(logits, t, 0.0)[1] == pytest.approx(-math.log(1e-12))
    assert np.allclose(softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])


def test_embedding_extension_shapes_and_copy():
    table = np.random.default_rng(5).normal(0.1, 0.02, size=(300, 16)).astype(np.float32)
    out = extend_positional_embeddings(table, 10, 40, seed=1)
    assert out.shape == (400, 16) and out.dtype == np.float32
    assert out[:300].tobytes() == table.tobytes()
    again = extend_positional_embeddings(table, 10, 40, seed=1)
    assert np.array_equal(out, again)


def test_embedding_extension_zero_variance():
    out = extend_positional_embeddings(np.zeros((300, 8)), 10, 40, seed=0)
    assert not out.any()
    out = extend_positional_embeddings(np.full((30, 4), 2.5), 1, 45, seed=0)
    assert (out[30:] == 2.5).all()


def test_embedding_extension_rejects_shrinking():
    with pytest.raises(ValueError):
        extend_positional_embeddings(np.zeros((300, 4)), 10, 30, seed=0)


def test_concatenation_examples():
    (plan,) = plan_concatenation([15_000, 15_000, 9_000], silence_bounds_ms=(300, 300))
    assert plan.silences_ms == (300, 300) and plan.total_ms == 39_600
    (plan,) = plan_concatenation([40_000])
    assert plan.silences_ms == () and plan.total_ms == 40_000
    assert plan_concatenation([]) == []
    with pytest.raises(ValueError):
        plan_concatenation([41_000])


def test_concatenation_keeps_order_and_every_segment():
    rng = np.random.default_rng(6)
    segs = [int(x) for x in rng.integers(500, 20_000, size=200)]
    plans = plan_concatenation(segs, seed=3)
    assert [i for p in plans for i in p.sources] == list(range(200))
    assert plans == plan_concatenation(segs, seed=3)
