import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softmask.labels import (
    DEFAULT_THRESHOLD,
    L1_WEIGHT,
    LossBreakdown,
    adversarial_losses,
    binarize,
    consensus,
    distill_combine,
    grad_l1,
    grad_mse,
    l1_loss,
    mix_labels,
    mse_loss,
    soften_binary,
    total_objective,
)

unit = st.floats(0, 1)
soft_maps = arrays(np.float64, (6, 7), elements=unit)
bin_maps = arrays(bool, (6, 7))


def fd_check(loss, grad, pred, rng, step=1e-6, skip=None, n=100):
    """Central differences at n random coordinates; returns worst relative error."""
    g = grad(pred)
    worst = 0.0
    flat = [i for i in range(pred.size) if skip is None or not skip.flat[i]]
    for i in rng.choice(flat, size=n, replace=True):
        p, m = pred.copy(), pred.copy()
        p.flat[i] += step
        m.flat[i] -= step
        fd = (loss(p) - loss(m)) / (2 * step)
        worst = max(worst, abs(fd - g.flat[i]) / max(abs(g.flat[i]), 1e-12))
    return worst


# ---------------------------------------------------------------- soften / binarize


def test_soften_examples():
    s = np.array([[0.4, 0.4]])
    np.testing.assert_array_equal(soften_binary(s, np.array([[True, False]])), [[1.0, 0.4]])
    rng = np.random.default_rng(0)
    s = rng.random((5, 5))
    assert soften_binary(s, np.zeros((5, 5), bool)).tobytes() == s.tobytes()
    with pytest.raises(ValueError):
        soften_binary(s, np.zeros((4, 5), bool))


@given(soft_maps, bin_maps)
def test_soften_laws(s, m):
    out = soften_binary(s, m)
    assert np.all(out >= s) and np.all(out >= m)
    np.testing.assert_array_equal(soften_binary(out, m), out)
    assert np.all(binarize(out, 0.999)[m])


def test_binarize_examples():
    assert binarize(np.array([0.0, 0.3]), 0).all()
    np.testing.assert_array_equal(binarize(np.array([0.2, 0.6]), DEFAULT_THRESHOLD), [False, True])
    assert abs(DEFAULT_THRESHOLD - 0.502) < 1e-3
    # exactly 128 on an 8-bit scale is on
    assert binarize(np.array([128 / 255]))[0]
    assert not binarize(np.array([127 / 255]))[0]


@given(soft_maps, unit, unit)
def test_binarize_monotone_in_threshold(s, t1, t2):
    t1, t2 = min(t1, t2), max(t1, t2)
    assert np.all(binarize(s, t2) <= binarize(s, t1))


# ---------------------------------------------------------------- mixing


def test_mix_examples():
    q = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(mix_labels(q, epsilon=0.0), q)
    np.testing.assert_allclose(mix_labels([1.0, 0.0], [0.5, 0.5], 0.1), [0.95, 0.05], atol=1e-15)
    with pytest.raises(ValueError):
        mix_labels(q, epsilon=1.5)
    with pytest.raises(ValueError):
        mix_labels([0.5, 0.6])
    with pytest.raises(ValueError):
        mix_labels(q, [0.5, 0.5])


simplex = st.lists(st.floats(0.01, 10), min_size=2, max_size=6).map(lambda v: np.array(v) / np.sum(v))


@given(simplex, st.data(), unit, unit)
def test_mix_simplex_and_affine(q, data, e1, e2):
    u = data.draw(
        st.lists(st.floats(0.01, 10), min_size=q.size, max_size=q.size).map(lambda v: np.array(v) / np.sum(v))
    )
    a, b = mix_labels(q, u, e1), mix_labels(q, u, e2)
    for x in (a, b):
        assert abs(x.sum() - 1) <= 1e-12 and np.all(x >= 0)
    mid = mix_labels(q, u, 0.5 * (e1 + e2))
    np.testing.assert_allclose(mid, 0.5 * (a + b), atol=1e-12)


# ---------------------------------------------------------------- consensus


def test_consensus_examples():
    votes = [np.array([[1, 1, 0, 1]]), np.array([[1, 0, 0, 0]]), np.array([[0, 1, 0, 0]]), np.array([[1, 0, 0, 0]])]
    votes = [v.astype(bool) for v in votes]
    np.testing.assert_array_equal(consensus(votes, 0.5), [[True, True, False, False]])
    np.testing.assert_array_equal(consensus(votes, 1.0), np.logical_and.reduce(votes))
    m = votes[0]
    for f in (0.1, 0.5, 1.0):
        np.testing.assert_array_equal(consensus([m], f), m)
    with pytest.raises(ValueError):
        consensus([])


@given(st.lists(bin_maps, min_size=1, max_size=6), st.floats(0.01, 1), st.floats(0.01, 1))
def test_consensus_shrinks(masks, f1, f2):
    f1, f2 = min(f1, f2), max(f1, f2)
    assert np.all(consensus(masks, f2) <= consensus(masks, f1))


@given(st.lists(bin_maps, min_size=4, max_size=4))
def test_consensus_half_of_four(masks):
    np.testing.assert_array_equal(consensus(masks, 0.5), np.sum(masks, axis=0) >= 2)


# ---------------------------------------------------------------- losses


def test_mse_examples():
    t = np.full((3, 2), 0.3)
    assert mse_loss(t, t, 1, 2, 3) == 0
    assert not grad_mse(t, t, 1, 2, 3).any()
    one = np.array([[0.5]]), np.array([[1.0]])
    assert mse_loss(*one, 1, 1, 1) == 0.25
    assert grad_mse(*one, 1, 1, 1)[0, 0] == -1.0
    assert mse_loss(np.zeros((2, 2)), np.ones((2, 2)), 2, 1, 1) == 1.0
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 2)), np.ones((2, 2)), 1, 1, 1)
    # shape is (r*H, r*W)
    assert mse_loss(np.zeros((2, 4)), np.zeros((2, 4)), 2, 2, 1) == 0


def test_l1_examples():
    assert l1_loss(np.ones(3), np.ones(3)) == 0
    assert l1_loss(np.array([0.0, 1.0]), np.array([1.0, 1.0])) == 0.5
    np.testing.assert_array_equal(grad_l1(np.array([0.0, 1.0, 2.0]), np.ones(3)), [-1 / 3, 0, 1 / 3])
    with pytest.raises(ValueError):
        l1_loss(np.ones(2), np.ones(3))


def test_grad_mse_finite_differences():
    rng = np.random.default_rng(7)
    r, w, h = 2, 5, 4
    for _ in range(5):
        pred, target = rng.random((r * h, r * w)), rng.random((r * h, r * w))
        err = fd_check(lambda p: mse_loss(p, target, r, w, h), lambda p: grad_mse(p, target, r, w, h), pred, rng)
        assert err <= 1e-4


def test_grad_l1_finite_differences():
    rng = np.random.default_rng(8)
    pred, target = rng.random((10, 10)), rng.random((10, 10))
    target[:2] = pred[:2]  # ties, excluded
    ties = np.abs(pred - target) <= 1e-5
    err = fd_check(lambda p: l1_loss(p, target), lambda p: grad_l1(p, target), pred, rng, skip=ties)
    assert err <= 1e-4
    assert not grad_l1(pred, target)[:2].any()


def test_adversarial_examples():
    ones, zeros, half = np.ones(4), np.zeros(4), np.full(4, 0.5)
    assert adversarial_losses(ones, half)[0] == 0
    assert adversarial_losses(zeros, ones)[1] == 0
    assert adversarial_losses(half, half) == (0.25, 0.5)
    with pytest.raises(ValueError):
        adversarial_losses(np.array([1.2]), np.array([0.5]))


def test_total_and_distill_examples():
    assert L1_WEIGHT == 100
    assert total_objective(0.25, 0.5) == 50.25
    assert total_objective(0.3, 0.0) == 0.3
    with pytest.raises(ValueError):
        total_objective(-1, 0)
    assert distill_combine(0.2, 0.4, 1.0) == 0.2
    assert distill_combine(0.2, 0.4, 0.0) == 0.4
    assert abs(distill_combine(0.2, 0.4, 0.5) - 0.3) < 1e-15
    with pytest.raises(ValueError):
        distill_combine(0.2, 0.4, 1.1)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 100))
def test_objectives_linear(a, b, c, lam):
    np.testing.assert_allclose(
        total_objective(a + b, c, lam), total_objective(a, c, lam) + total_objective(b, 0, lam), rtol=1e-12, atol=1e-12
    )
    np.testing.assert_allclose(
        distill_combine(a + b, c, 0.3), distill_combine(a, c, 0.3) + distill_combine(b, 0, 0.3), rtol=1e-12, atol=1e-12
    )


def test_loss_breakdown():
    rng = np.random.default_rng(1)
    pred, target = rng.random((4, 4)), rng.random((4, 4))
    lb = LossBreakdown.compute(pred, target, np.full((2, 2), 0.5), 2, 2, 2)
    assert lb.adversarial == 0.25
    assert lb.total == pytest.approx(lb.adversarial + lb.lam * lb.l1, abs=1e-12)
    assert lb.mse == mse_loss(pred, target, 2, 2, 2)
    assert min(lb.mse, lb.l1, lb.adversarial) >= 0
