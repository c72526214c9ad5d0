import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eoslab.dynamics import (
    SharpnessProbe,
    Trajectory,
    detect_period,
    finite_difference_gradient,
    hessian_vector_product,
    matrix_grad,
    run_gd,
    top_eigenvalue,
)
from eoslab.errors import DivergenceError, NotConvergedError, PreconditionError
from eoslab.factor2d import grad_2d, hessian_2d
from eoslab.scalar1d import Quartic, gd_1d, solve_period2

QUARTIC = Quartic(1.0)


def quartic_grad(theta):
    return np.array([QUARTIC.grad(theta[0])])


def test_one_step_to_origin():
    traj = run_gd(lambda th: th, [3.0, -2.0, 0.5], 1.0, 1)
    assert np.all(traj.points[1] == 0.0)


def test_run_gd_matches_gd_1d():
    a = run_gd(quartic_grad, [0.5], 1.05, 2000)
    b = gd_1d(QUARTIC, 0.5, 1.05, 2000)
    assert np.array_equal(a.points, b.points)


def test_run_gd_rejects_dimension_mismatch():
    with pytest.raises(PreconditionError):
        run_gd(lambda th: np.zeros(3), [1.0, 2.0], 0.1, 5)


def test_run_gd_divergence():
    with pytest.raises(DivergenceError) as info:
        run_gd(lambda th: th, [1.0], 2.5, 10_000)
    err = info.value
    assert np.all(np.isfinite(err.last_state))
    assert err.trajectory.steps == err.step


def test_probes_are_read_only():
    g = lambda th: grad_2d(th, 1.0)  # noqa: E731
    plain = run_gd(g, [1.5, 0.8], 1.05, 500)
    probed = run_gd(
        g, [1.5, 0.8], 1.05, 500, probes={"sharpness": SharpnessProbe(g)}, loss=lambda th: 0.0, probe_every=3
    )
    assert np.array_equal(plain.points, probed.points)
    s = probed.scalars["sharpness"]
    assert np.isnan(s[1]) and np.isfinite(s[3])


def test_trajectory_series_length_checked():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((4, 2)), {"loss": np.zeros(3)})


def test_period_quartic():
    traj = gd_1d(QUARTIC, 0.5, 1.05, 10_000)
    rep = detect_period(traj)
    o = solve_period2(1.0, 1.05)
    assert rep.period == 2
    assert rep.sorted_points()[:, 0] == pytest.approx([o.x_low, o.x_high], abs=1e-8)
    assert rep.residual <= 1e-8


def test_period_constant():
    rep = detect_period(np.ones((100, 2)))
    assert rep.period == 1 and rep.settled_at == 0


def test_period_four_in_2d():
    traj = run_gd(lambda th: grad_2d(th, 1.0), [1.5, 0.8], 1.25, 10_000)
    assert detect_period(traj, tol=1e-7).period == 4


def test_period_none_for_chaos():
    # logistic map at r = 4 is chaotic
    x = [0.3]
    for _ in range(300):
        x.append(4 * x[-1] * (1 - x[-1]))
    assert detect_period(np.array(x)).period is None


def test_period_needs_length():
    with pytest.raises(PreconditionError):
        detect_period(np.zeros(10), max_period=8, tail_window=64)


def test_period_shift_invariant():
    traj = gd_1d(QUARTIC, 0.3, 1.1, 5000)
    a = detect_period(traj)
    b = detect_period(traj.tail(3000))
    assert a.period == b.period
    assert a.sorted_points() == pytest.approx(b.sorted_points(), abs=1e-12)


def test_hvp_quadratic_exact():
    hv = hessian_vector_product(matrix_grad(np.diag([2.0, 5.0])), [0.3, -0.7], [0.0, 1.0], h=1e-4)
    assert hv == pytest.approx([0.0, 5.0], abs=1e-10)


def test_hvp_quartic():
    assert hessian_vector_product(quartic_grad, [1.0], [1.0])[0] == pytest.approx(2.0, abs=1e-6)


def test_hvp_needs_unit_vector():
    with pytest.raises(PreconditionError):
        hessian_vector_product(quartic_grad, [1.0], [2.0])


def test_hvp_2d_minimum_direction():
    x, y = 2.0, 0.5
    v = np.array([y, x]) / np.hypot(x, y)  # normal to the manifold xy = 1
    hv = hessian_vector_product(lambda th: grad_2d(th, 1.0), [x, y], v)
    assert hv == pytest.approx((x * x + y * y) * v, rel=1e-6)


@settings(max_examples=50)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 3), st.integers(0, 2**31))
def test_hvp_symmetry(x, y, mu, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(2), rng.standard_normal(2)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    g = lambda th: grad_2d(th, mu)  # noqa: E731
    a = hessian_vector_product(g, [x, y], v) @ u
    b = hessian_vector_product(g, [x, y], u) @ v
    scale = np.linalg.norm(hessian_2d(x, y, mu).matrix) + 1.0
    assert abs(a - b) <= 1e-5 * scale


def test_top_eigenvalue_diag():
    res = top_eigenvalue(matrix_grad(np.diag([2.0, 5.0])), [0.0, 0.0])
    assert res.lam == pytest.approx(5.0, rel=1e-9)
    # the Rayleigh quotient converges twice as fast as the vector
    assert res.vector == pytest.approx([0.0, 1.0], abs=1e-4)


def test_top_eigenvalue_2d_minimum():
    res = top_eigenvalue(lambda th: grad_2d(th, 1.0), [1.0, 1.0])
    assert res.lam == pytest.approx(2.0, rel=1e-6)


def test_top_eigenvalue_neuron_minimum():
    from eoslab.neuron import ambient_population_grad

    def g(th):
        gv, gw = ambient_population_grad(th[0], th[1:], [1.0, 0.0])
        return np.concatenate([[gv], gw])

    # v = |w| = 1 aligned with the teacher: lambda_1 = (|w|^2 + v^2) / d
    res = top_eigenvalue(g, [1.0, 1.0, 0.0])
    assert res.lam == pytest.approx(1.0, rel=1e-6)


def test_top_eigenvalue_not_converged():
    with pytest.raises(NotConvergedError) as info:
        top_eigenvalue(matrix_grad(np.diag([1.0, 0.99])), [0.0, 0.0], max_iters=5)
    assert info.value.estimate is not None


def test_power_iteration_agrees_with_closed_form():
    rng = np.random.default_rng(11)
    for _ in range(50):
        x, y = rng.uniform(0.3, 2.0, size=2)
        mu = rng.uniform(0.5, 2.0)
        exact = hessian_2d(x, y, mu)
        lam = np.linalg.eigvalsh(exact.matrix)
        if abs(lam[0]) > 0.95 * abs(lam[1]):
            continue  # no dominant eigenvalue in magnitude
        res = top_eigenvalue(lambda th: grad_2d(th, mu), [x, y], tol=1e-10, max_iters=20_000)
        assert res.lam == pytest.approx(exact.eig[0], rel=1e-6)


def test_sharpness_probe_warm_start():
    g = lambda th: grad_2d(th, 1.0)  # noqa: E731
    probe = SharpnessProbe(g)
    assert probe([1.0, 1.0]) == pytest.approx(2.0, rel=1e-6)
    assert probe([1.01, 0.99]) == pytest.approx(hessian_2d(1.01, 0.99, 1.0).eig[0], rel=1e-6)


def test_finite_difference_gradient_oracle():
    f = lambda th: np.sum(th**4)  # noqa: E731
    th = np.array([0.3, -1.2, 2.0])
    assert finite_difference_gradient(f, th) == pytest.approx(4 * th**3, rel=1e-8)
