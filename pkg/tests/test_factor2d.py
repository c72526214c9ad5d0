import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eoslab.dynamics import detect_period, finite_difference_gradient
from eoslab.errors import DivergenceError, PreconditionError
from eoslab.factor2d import (
    Factor2DConfig,
    balance_gap_series,
    difference_recursion_residual,
    gap_strictly_decreasing,
    gd_2d,
    grad_2d,
    hessian_2d,
    loss_2d,
    positivity_condition,
    product_recursion_residual,
)
from eoslab.scalar1d import solve_period2


def test_balanced_minimum_is_fixed():
    t = gd_2d(Factor2DConfig(2.0, 1.1, math.sqrt(2.0), math.sqrt(2.0), 100))
    assert np.allclose(t.points, math.sqrt(2.0), rtol=0, atol=1e-15)


def test_period2_matches_1d():
    t = gd_2d(Factor2DConfig(1.0, 1.05, 1.5, 0.8, 10_000))
    rep = detect_period(t)
    o = solve_period2(1.0, 1.05)
    assert rep.period == 2
    pts = rep.sorted_points()
    assert pts[:, 0] == pytest.approx([o.x_low, o.x_high], abs=1e-8)
    assert pts[:, 1] == pytest.approx(pts[:, 0], abs=1e-12)


def test_period4_and_balance():
    t = gd_2d(Factor2DConfig(1.0, 1.25, 1.2, 0.9, 10_000))
    assert detect_period(t, tol=1e-7).period == 4
    assert abs(t.points[-1, 0] - t.points[-1, 1]) < 1e-8


def test_series_recorded():
    t = gd_2d(Factor2DConfig(1.0, 1.05, 1.5, 0.8, 20))
    x, y = t.points.T
    assert np.array_equal(t.scalars["product"], x * y)
    assert t.scalars["loss"] == pytest.approx(0.5 * (x * y - 1.0) ** 2)


def test_divergence():
    with pytest.raises(DivergenceError) as info:
        gd_2d(Factor2DConfig(1.0, 3.0, 3.0, 0.1, 1000))
    assert info.value.trajectory.steps == info.value.step


def test_config_validation():
    with pytest.raises(PreconditionError):
        Factor2DConfig(mu=-1.0)
    with pytest.raises(PreconditionError):
        Factor2DConfig(K=0.0)
    with pytest.raises(PreconditionError):
        Factor2DConfig(steps=0)


def test_gap_series_balanced():
    t = gd_2d(Factor2DConfig(1.0, 1.05, 1.1, 1.1, 200))
    steps, gaps = balance_gap_series(t, 1.0)
    assert steps.size > 0 and np.all(gaps == 0.0)


def test_gap_series_decreasing():
    t = gd_2d(Factor2DConfig(1.0, 1.3, 1.4, 0.9, 100_000))
    steps, gaps = balance_gap_series(t, 1.0)
    assert np.all(t.scalars["product"][steps] > 1.0)
    assert gap_strictly_decreasing(gaps, floor=1e-13)
    assert gaps[-1] < 1e-8


def test_gap_series_empty_below_manifold():
    t = gd_2d(Factor2DConfig(1.0, 0.5, 0.5, 0.5, 50))  # converges from below
    steps, gaps = balance_gap_series(t, 1.0)
    assert steps.size == 0 and gaps.size == 0


def test_positivity_balanced_example():
    K = 1.1
    x = math.sqrt(1.0 + 0.1 / K)  # eta (x0 y0 - mu) = 0.1
    res = positivity_condition(x, x, 1.0, K)
    assert res.p == pytest.approx(1.0)
    assert res.lhs == pytest.approx(4 / 27 * 2.1**3 - 1.1, abs=1e-12)
    assert res.lhs == pytest.approx(0.2720, abs=1e-4)
    assert res.holds


def test_positivity_preconditions():
    with pytest.raises(PreconditionError):
        positivity_condition(1.0, 1.0, 1.0, 1.1)
    with pytest.raises(PreconditionError):
        positivity_condition(-2.0, -1.0, 1.0, 1.1)


def test_positivity_fails_with_sign_flip():
    # large imbalance m = 3 just above the manifold: the condition fails and
    # the smaller factor really does cross zero
    y0 = (-3 + math.sqrt(9 + 4 * 1.001)) / 2
    x0 = y0 + 3
    res = positivity_condition(x0, y0, 1.0, 1.4)
    assert not res.holds
    with pytest.raises(DivergenceError) as info:
        gd_2d(Factor2DConfig(1.0, 1.4, x0, y0, 5000))
    # the flip happens within a few steps, well before the blow-up
    flipped = np.nonzero(np.any(info.value.trajectory.points <= 0, axis=1))[0]
    assert flipped.size and flipped[0] <= 5


def test_hessian_examples():
    assert hessian_2d(1.0, 1.0, 1.0).eig == pytest.approx((2.0, 0.0))
    h = hessian_2d(2.0, 0.5, 1.0)
    assert h.eig[0] == pytest.approx(4.25)
    assert h.eig[1] == pytest.approx(0.0, abs=1e-15)
    h0 = hessian_2d(0.0, 0.0, 1.0)
    assert np.array_equal(h0.matrix, [[0.0, -1.0], [-1.0, 0.0]])
    assert h0.eig == pytest.approx((1.0, -1.0))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3))
def test_hessian_against_numpy(x, y, mu):
    h = hessian_2d(x, y, mu)
    ref = np.linalg.eigvalsh(h.matrix)[::-1]
    assert h.eig == pytest.approx(tuple(ref), rel=1e-9, abs=1e-9 * (1 + np.abs(ref).max()))


@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0.1, 3))
def test_hessian_on_manifold(x, mu, _):
    y = mu / x
    h = hessian_2d(x, y, mu)
    assert h.eig[0] == pytest.approx(x * x + y * y, rel=1e-12)
    assert abs(h.eig[1]) <= 1e-12 * (x * x + y * y)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(1.01, 1.49), st.floats(0.3, 2.5), st.floats(0.3, 2.5))
def test_step_recursions(mu, K, x0, y0):
    try:
        t = gd_2d(Factor2DConfig(mu, K, x0, y0, 2000))
    except DivergenceError as exc:
        t = exc.trajectory
    assert difference_recursion_residual(t, mu) <= 1e-13
    assert product_recursion_residual(t, mu) <= 1e-12


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(20):
        th = rng.uniform(-2, 2, size=2)
        fd = finite_difference_gradient(lambda z: loss_2d(z, 1.3), th)
        assert grad_2d(th, 1.3) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_limit_equivalence():
    rng = np.random.default_rng(9)
    for _ in range(20):
        K = rng.uniform(1.01, 1.121)
        x0 = rng.uniform(1.05, 1.6)
        y0 = rng.uniform(1.0 / x0 + 0.01, 1.6)
        t = gd_2d(Factor2DConfig(1.0, K, x0, y0, 50_000))
        o = solve_period2(1.0, K)
        # the orbit may sit on the mirrored branch (-x, -y)
        assert np.sort(np.abs(t.points[-2:, 0])) == pytest.approx([o.x_low, o.x_high], abs=1e-8)
