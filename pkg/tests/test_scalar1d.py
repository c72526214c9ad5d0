import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Polynomial as P

from eoslab.errors import (
    DivergenceError,
    NoOrbitError,
    NotApplicableError,
    PreconditionError,
    UnsupportedOrderError,
)
from eoslab.scalar1d import (
    Custom,
    HigherOrderOutcome,
    Polynomial,
    Quadratic,
    Quartic,
    ScaledSine,
    SquaredLossOf,
    Stability,
    Tanh,
    WindowKind,
    check_condition_higher_order,
    check_condition_third_order,
    check_l2_condition,
    derivatives,
    eta_window,
    find_two_cycle_eta,
    gd_1d,
    solve_period2,
    two_step_return,
)

SQUARE = Polynomial([0.0, 0.0, 1.0])

# 6th-order central stencil for a first derivative
_D1 = {1: 45.0, 2: -9.0, 3: 1.0}


def fd6(fn, x, h=1e-3):
    return sum(c * (fn(x + k * h) - fn(x - k * h)) for k, c in _D1.items()) / (60.0 * h)


# ---------------------------------------------------------------- derivatives


def test_quartic_derivatives_at_root():
    assert derivatives(Quartic(1.0), 1.0, 4) == [0.0, 0.0, 2.0, 6.0, 6.0]


def test_quadratic_derivatives():
    assert derivatives(Quadratic(3.0), 0.0, 4) == [0.0, 0.0, 3.0, 0.0, 0.0]


def test_squared_sine_at_zero():
    d = derivatives(SquaredLossOf(ScaledSine(1.0), 0.0), 0.0, 3)
    assert d[2] == pytest.approx(2.0)
    assert d[3] == pytest.approx(0.0, abs=1e-15)


def test_order_beyond_max_rejected():
    with pytest.raises(UnsupportedOrderError):
        Quartic(1.0).derivatives(0.3, Quartic.max_order + 1)
    f = Custom(lambda x, k: [x] + [1.0] + [0.0] * (k - 1), max_order=4)
    with pytest.raises(UnsupportedOrderError):
        f.derivatives(0.0, 5)


@given(st.floats(0.1, 3.0), st.floats(-3.0, 3.0))
def test_quartic_matches_polynomial_oracle(mu, x):
    p = 0.25 * P([-mu, 0.0, 1.0]) ** 2
    got = Quartic(mu).derivatives(x, 6)
    for k in range(7):
        assert got[k] == pytest.approx(p.deriv(k)(x) if k else p(x), rel=1e-12, abs=1e-12)


@given(st.floats(-2.0, 2.0), st.floats(-0.9, 0.9))
def test_squared_loss_expansion(x, y):
    # explicit second to fourth derivative formulas for (g - y)^2
    for g in (Tanh(), ScaledSine(1.0)):
        g0, g1, g2, g3, g4 = g.derivatives(x, 4)
        r = g0 - y
        want = [
            2 * r * g2 + 2 * g1**2,
            2 * r * g3 + 6 * g2 * g1,
            2 * r * g4 + 6 * g2**2 + 8 * g1 * g3,
        ]
        got = SquaredLossOf(g, y).derivatives(x, 4)[2:]
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_squared_loss_against_finite_differences():
    rng = np.random.default_rng(7)
    y = 0.3
    for x in rng.uniform(-1.5, 1.5, size=20):
        f = SquaredLossOf(Tanh(), y)
        d = f.derivatives(x, 4)
        # order 1 from an independently coded value, higher orders by chaining
        assert fd6(lambda t: (math.tanh(t) - y) ** 2, x) == pytest.approx(d[1], rel=1e-5, abs=1e-9)
        for k in range(2, 5):
            est = fd6(lambda t: f.derivatives(t, k - 1)[k - 1], x)
            assert est == pytest.approx(d[k], rel=1e-5, abs=1e-8)


def test_tanh_against_mpmath():
    for x in (-1.3, 0.2, 0.9):
        got = Tanh().derivatives(x, 6)
        want = [float(mpmath.diff(mpmath.tanh, x, k)) for k in range(7)]
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


# ------------------------------------------------------- condition checks


def test_third_order_quartic_margin():
    for mu in (0.5, 1.0, 2.0):
        res = check_condition_third_order(Quartic(mu), math.sqrt(mu))
        assert res.applicable
        assert res.margin == pytest.approx(96 * mu, rel=1e-12)


def test_third_order_quadratic_not_applicable():
    assert not check_condition_third_order(Quadratic(2.0), 0.0).applicable


def test_third_order_square_loss():
    assert check_condition_third_order(SquaredLossOf(SQUARE, 1.0), 1.0).applicable


def test_third_order_requires_minimum():
    with pytest.raises(PreconditionError, match="f'="):
        check_condition_third_order(Quartic(1.0), 0.5)
    with pytest.raises(PreconditionError):
        check_condition_third_order(Quartic(1.0), 0.0)  # a maximum


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_higher_order_sine(a):
    res = check_condition_higher_order(ScaledSine(a), -math.pi / 2)
    assert res.outcome is HigherOrderOutcome.STABLE_OSCILLATION
    assert res.k == 4 and res.value == pytest.approx(-a)


def test_higher_order_quadratic_all_zero():
    assert check_condition_higher_order(Quadratic(1.0), 0.0).outcome is HigherOrderOutcome.ALL_ZERO


def test_higher_order_refuses_third_order_case():
    with pytest.raises(PreconditionError, match="third"):
        check_condition_higher_order(Quartic(1.0), 1.0)


def test_higher_order_positive_even():
    f = Polynomial([0, 0, 0.5, 0, 1.0])
    assert check_condition_higher_order(f, 0.0).outcome is HigherOrderOutcome.NOT_STABLE


@pytest.mark.parametrize("c5, mirrored", [(1.0, False), (-1.0, True)])
def test_higher_order_odd(c5, mirrored):
    f = Polynomial([0, 0, 0.5, 0, 0, c5, -1.0])
    res = check_condition_higher_order(f, 0.0)
    assert res.outcome is HigherOrderOutcome.STABLE_OSCILLATION
    assert res.k == 5 and res.mirrored is mirrored
    assert res.next_value == pytest.approx(-720.0)


def test_higher_order_odd_positive_next():
    f = Polynomial([0, 0, 0.5, 0, 0, 1.0, 1.0])
    assert check_condition_higher_order(f, 0.0).outcome is HigherOrderOutcome.NOT_STABLE


def test_higher_order_odd_undetermined_at_max_order():
    f = Custom(lambda x, k: [0.5 * x * x, x, 1.0, 0.0, 0.0, 1.0][: k + 1], max_order=5)
    assert check_condition_higher_order(f, 0.0).outcome is HigherOrderOutcome.UNDETERMINED


def test_l2_condition_examples():
    assert check_l2_condition(Tanh(), math.atanh(0.5), 0.5)
    assert check_l2_condition(ScaledSine(1.0), math.asin(0.5), 0.5)
    assert not check_l2_condition(SQUARE, 0.0, 0.0)


def test_l2_condition_requires_root():
    with pytest.raises(PreconditionError):
        check_l2_condition(Tanh(), 0.1, 0.5)


@given(st.floats(-0.95, 0.95))
def test_l2_condition_agrees_with_third_order(y):
    # the l2 criterion is the sign of the third-order margin of (g - y)^2
    x_bar = math.atanh(y)
    res = check_condition_third_order(SquaredLossOf(Tanh(), y), x_bar)
    assert check_l2_condition(Tanh(), x_bar, y) == (res.margin > 0)


# ------------------------------------------------------------------- window


def test_window_quartic():
    w = eta_window(Quartic(1.0), 1.0, 0.01)
    assert w.validity is WindowKind.THIRD_ORDER
    assert (w.lower, w.upper) == pytest.approx((1.0, 2 / 1.94), rel=1e-14)


def test_window_quadratic_rejected():
    with pytest.raises(NotApplicableError):
        eta_window(Quadratic(1.0), 0.0, 0.01)


def test_window_sine_even_branch():
    w = eta_window(ScaledSine(1.0), -math.pi / 2, 0.1)
    assert w.validity is WindowKind.HIGHER_ORDER_EVEN
    assert (w.lower, w.upper) == pytest.approx((2.0, 2 / 0.99), rel=1e-12)


def test_window_eps_sign():
    with pytest.raises(PreconditionError):
        eta_window(Quartic(1.0), 1.0, -0.01)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(1e-3, 2e-2))
def test_two_cycle_inside_window(mu, rel_eps):
    f = Quartic(mu)
    x_bar = math.sqrt(mu)
    eps = rel_eps * x_bar
    win = eta_window(f, x_bar, eps)
    eta = find_two_cycle_eta(f, x_bar, eps)
    assert win.lower < eta < win.upper
    assert abs(two_step_return(f, win.x0, eta)) < 1e-12 * max(1.0, x_bar)


@pytest.mark.parametrize("c5", [1.0, -1.0])
def test_two_cycle_odd_order(c5):
    f = Polynomial([0, 0, 0.5, 0, 0, c5, -1.0])
    win = eta_window(f, 0.0, 0.1)
    assert win.validity is WindowKind.HIGHER_ORDER_ODD
    eta = find_two_cycle_eta(f, 0.0, 0.1)
    assert win.lower < eta < win.upper
    assert abs(two_step_return(f, win.x0, eta)) < 1e-12


def test_two_cycle_sine():
    eta = find_two_cycle_eta(ScaledSine(1.0), -math.pi / 2, 0.1)
    assert 2.0 < eta < 2 / 0.99


@pytest.mark.parametrize("eta", [2.01, 2.1, 2.5, 4.0])
def test_quadratic_has_no_stable_cycle(eta):
    with pytest.raises(DivergenceError):
        gd_1d(Quadratic(1.0), 0.3, eta, 100_000)


# --------------------------------------------------------------- period 2


def test_period2_example():
    o = solve_period2(1.0, 1.05)
    assert o.x_low == pytest.approx(0.8728716, abs=1e-7)
    assert o.x_high == pytest.approx(1.0910895, abs=1e-7)
    assert o.stability is Stability.CONVERGENT_MONOTONE


def test_period2_degenerate():
    o = solve_period2(1.0, 1.0)
    assert o.x_low == o.x_high == 1.0
    assert o.stability is Stability.DEGENERATE


def test_period2_classes():
    assert solve_period2(1.0, 1.2).stability is Stability.CONVERGENT_OSCILLATING
    assert solve_period2(1.0, 1.237).stability is Stability.EXISTS_UNSTABLE
    assert solve_period2(1.0, 1.5).stability is Stability.EXISTS_UNSTABLE
    assert solve_period2(1.0, 1.6).stability is Stability.NONE


def test_period2_errors():
    with pytest.raises(NoOrbitError):
        solve_period2(1.0, 0.9)
    with pytest.raises(PreconditionError):
        solve_period2(-1.0, 1.0)


@given(st.floats(0.5, 2.0), st.floats(1.0, 1.121, exclude_min=True))
def test_vieta(mu, k):
    eta = k / mu
    o = solve_period2(mu, eta)
    assert o.x_low * o.x_high * eta == pytest.approx(1.0, rel=1e-12)
    assert (o.x_low**2 + o.x_high**2) / (mu + 1 / eta) == pytest.approx(1.0, rel=1e-12)
    assert o.x_low <= math.sqrt(mu) <= o.x_high


@given(st.floats(0.5, 2.0), st.floats(1.001, 1.121))
def test_period2_against_numpy_roots(mu, k):
    eta = k / mu
    roots = np.roots([1.0, 0.0, -(mu + 1 / eta), 0.0, 1 / eta**2])
    pos = np.sort(roots[(np.abs(roots.imag) < 1e-9) & (roots.real > 0)].real)
    o = solve_period2(mu, eta)
    assert [o.x_low, o.x_high] == pytest.approx(list(pos), rel=1e-7)


@given(st.floats(0.5, 2.0), st.floats(1.001, 1.121))
def test_orbit_is_fixed_by_two_steps(mu, k):
    o = solve_period2(mu, k / mu)
    for x in o.points:
        assert gd_1d(Quartic(mu), x, k / mu, 2).points[-1, 0] == pytest.approx(x, abs=1e-10)


# --------------------------------------------------------------------- gd_1d


def test_gd_fixed_point():
    t = gd_1d(Quartic(1.0), 1.0, 1.05, 50)
    assert np.all(t.points == 1.0)
    assert np.all(t.scalars["loss"] == 0.0)


def test_gd_terminal_pair():
    t = gd_1d(Quartic(1.0), 0.5, 1.05, 10_000)
    o = solve_period2(1.0, 1.05)
    assert np.sort(t.points[-2:, 0]) == pytest.approx([o.x_low, o.x_high], abs=1e-8)


def test_gd_divergence_carries_partial():
    with pytest.raises(DivergenceError) as info:
        gd_1d(Quadratic(1.0), 1.0, 2.5, 1000)
    err = info.value
    assert err.trajectory.steps == err.step
    assert np.all(np.isfinite(err.trajectory.points))


def test_gd_needs_steps():
    with pytest.raises(PreconditionError):
        gd_1d(Quartic(1.0), 0.5, 1.05, 0)


def test_global_convergence():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        mu = rng.uniform(0.5, 2.0)
        k = rng.uniform(1.001, 1.121)
        x0 = rng.uniform(0.0, math.sqrt(mu))
        o = solve_period2(mu, k / mu)
        t = gd_1d(Quartic(mu), x0, k / mu, 100_000)
        assert np.sort(t.points[-2:, 0]) == pytest.approx([o.x_low, o.x_high], abs=1e-8)
