import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from onebp.loss import batch_loss, infonce_batch, infonce_grads, infonce_loss

finite = st.floats(-5, 5, allow_nan=False)


def test_equal_scores():
    assert infonce_loss(0.0, [0.0]) == pytest.approx(0.693147, abs=1e-6)
    assert infonce_loss(0.0, [0.0] * 5) == pytest.approx(1.791759, abs=1e-6)


def test_known_value():
    # log(e^2 + e^1 + e^0) - 2, worked by hand
    expected = math.log(math.exp(2) + math.exp(1) + 1) - 2
    assert expected == pytest.approx(0.407606, abs=1e-6)
    assert infonce_loss(2.0, [1.0, 0.0]) == pytest.approx(expected, abs=1e-12)


def test_extreme_scores_stable():
    assert infonce_loss(1000.0, [0.0]) == 0.0
    assert infonce_loss(0.0, [1000.0]) == pytest.approx(1000.0)
    assert math.isfinite(infonce_loss(-800.0, [-800.0, 800.0]))


def test_empty_negatives():
    with pytest.raises(ValueError):
        infonce_loss(0.0, [])
    with pytest.raises(ValueError):
        infonce_grads([1.0], [1.0], np.empty((0, 1)))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        infonce_grads([1.0, 0.0], [1.0], [[1.0, 0.0]])


def test_identical_negatives_share_gradient():
    g = infonce_grads([0.3, -0.2], [1.0, 0.5], [[0.1, 0.2]] * 4)
    assert np.allclose(g.grad_negatives, g.grad_negatives[0])
    # 1 - p0 equals the total negative mass
    assert np.allclose(g.grad_positive, -g.grad_negatives.sum(axis=0))


def test_zero_user():
    g = infonce_grads([0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert g.loss == pytest.approx(math.log(3))
    assert np.all(g.grad_positive == 0) and np.all(g.grad_negatives == 0)
    # p = 1/3 each
    assert g.grad_user == pytest.approx(np.array([-2 / 3 * 1 + 1 / 3, -2 / 3 * 2 + 1 / 3, -2]))


def test_hand_gradient_d2():
    u, vp, vn = np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([[0.0, 1.0]])
    g = infonce_grads(u, vp, vn)
    p0 = math.e / (math.e + 1)
    assert g.grad_positive == pytest.approx([-(1 - p0), 0.0])
    assert g.grad_negatives[0] == pytest.approx([1 - p0, 0.0])
    assert g.grad_user == pytest.approx([-(1 - p0), 1 - p0])


def _numeric(f, x, h=1e-4):
    out = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def test_finite_differences():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        d, s = rng.integers(1, 9), rng.integers(1, 7)
        u, vp, vn = rng.normal(size=d), rng.normal(size=d), rng.normal(size=(s, d))
        g = infonce_grads(u, vp, vn)

        def loss(u=u, vp=vp, vn=vn):
            return infonce_loss(u @ vp, vn @ u)

        pairs = [
            (g.grad_user, _numeric(lambda x: loss(u=x), u)),
            (g.grad_positive, _numeric(lambda x: loss(vp=x), vp)),
            (g.grad_negatives, _numeric(lambda x: loss(vn=x), vn)),
        ]
        for analytic, numeric in pairs:
            scale = max(np.abs(numeric).max(), 1e-3)
            worst = max(worst, np.abs(analytic - numeric).max() / scale)
    assert worst < 1e-5


@given(arrays(np.float64, 5, elements=finite), finite)
def test_shift_invariance(s, c):
    assert infonce_loss(s[0] + c, s[1:] + c) == pytest.approx(infonce_loss(s[0], s[1:]), abs=1e-9)


@given(arrays(np.float64, st.integers(2, 8), elements=finite))
def test_lower_bounds(s):
    loss = infonce_loss(s[0], s[1:])
    assert loss >= 0.0
    assert loss >= max(0.0, s[1:].max() - s[0]) - 1e-12
    assert loss <= math.log(s.size) + max(0.0, s[1:].max() - s[0]) + 1e-9


@given(st.integers(0, 2**20))
def test_batch_matches_rows(seed):
    rng = np.random.default_rng(seed)
    B, S, d = 4, 3, 5
    u, vp, vn = rng.normal(size=(B, d)), rng.normal(size=(B, d)), rng.normal(size=(B, S, d))
    bg = infonce_batch(u, vp, vn)
    for b in range(B):
        g = infonce_grads(u[b], vp[b], vn[b])
        assert bg.losses[b] == pytest.approx(g.loss, abs=1e-12)
        np.testing.assert_allclose(bg.grad_user[b], g.grad_user, atol=1e-12)
        np.testing.assert_allclose(bg.grad_positive[b], g.grad_positive, atol=1e-12)
        np.testing.assert_allclose(bg.grad_negatives[b], g.grad_negatives, atol=1e-12)
    assert batch_loss(u, vp, vn) == pytest.approx(sum(
        infonce_grads(u[b], vp[b], vn[b]).loss for b in range(B)))
