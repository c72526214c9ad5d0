"""Fixed-step gradient descent, period detection and sharpness probes.

Everything here works on flat float64 vectors and plain callables:

* a *gradient oracle* maps ``theta -> grad f(theta)``;
* a *probe* maps ``theta -> float`` and is evaluated on recorded iterates
  after the run, so it can never perturb the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from eoslab.errors import DivergenceError, NotConvergedError, PreconditionError

GradFn = Callable[[np.ndarray], np.ndarray]
Probe = Callable[[np.ndarray], float]

_CBRT_EPS = float(np.cbrt(np.finfo(float).eps))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pts.reshape(-1, 1) if pts.ndim == 1 else pts


@dataclass
class Trajectory:
    """Iterates ``points[t]`` for ``t = 0..T`` plus named per-step series."""

    points: np.ndarray
    scalars: dict[str, np.ndarray] = field(default_factory=dict)
    eta: float = float("nan")
    seed: int | None = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        n = self.points.shape[0]
        for name, series in self.scalars.items():
            series = np.asarray(series, dtype=float)
            if series.shape != (n,):
                raise ValueError(f"series {name!r} has length {series.shape}, expected {n}")
            self.scalars[name] = series

    def __len__(self):
        return self.points.shape[0]

    @property
    def steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def tail(self, start: int) -> "Trajectory":
        """The trajectory with the first ``start`` records discarded."""
        return Trajectory(
            self.points[start:].copy(),
            {k: v[start:].copy() for k, v in self.scalars.items()},
            eta=self.eta,
            seed=self.seed,
        )


@dataclass
class OrbitReport:
    period: int | None
    orbit_points: list[np.ndarray]
    residual: float
    settled_at: int | None

    def sorted_points(self, coord: int = 0) -> np.ndarray:
        """Orbit points as an array ordered by one coordinate."""
        if not self.orbit_points:
            return np.empty((0, 0))
        pts = np.array(self.orbit_points)
        return pts[np.argsort(pts[:, coord])]


@dataclass
class EigenResult:
    lam: float
    vector: np.ndarray
    iters: int


def run_gd(
    grad: GradFn,
    theta0,
    eta: float,
    steps: int,
    probes: Mapping[str, Probe] | None = None,
    loss: Probe | None = None,
    probe_every: int = 1,
    max_abs: float | None = None,
    seed: int | None = None,
) -> Trajectory:
    """Run ``theta <- theta - eta * grad(theta)`` for ``steps`` steps.

    ``loss`` is evaluated at every recorded step; ``probes`` every
    ``probe_every`` steps (NaN elsewhere).  A non-finite iterate, or one with
    an entry above ``max_abs``, raises :class:`DivergenceError` carrying the
    partial trajectory.
    """
    if steps < 0:
        raise PreconditionError("steps must be non-negative")
    theta = np.array(theta0, dtype=float).reshape(-1)
    g0 = np.asarray(grad(theta), dtype=float).reshape(-1)
    if g0.shape != theta.shape:
        raise PreconditionError(f"gradient has shape {g0.shape}, parameters {theta.shape}")

    pts = np.empty((steps + 1, theta.size))
    pts[0] = theta
    g = g0
    last = steps
    failure = None
    for t in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            new = theta - eta * g
        if not np.all(np.isfinite(new)) or (max_abs is not None and np.max(np.abs(new)) > max_abs):
            last = t
            failure = new
            break
        pts[t + 1] = new
        theta = new
        if t + 1 < steps:
            g = np.asarray(grad(theta), dtype=float).reshape(-1)

    traj = _with_probes(pts[: last + 1], eta, loss, probes, probe_every, seed)
    if failure is not None:
        raise DivergenceError(
            f"iterate left the finite region after step {last} (eta={eta})",
            step=last,
            last_state=pts[last].copy(),
            trajectory=traj,
        )
    return traj


def _with_probes(pts, eta, loss, probes, probe_every, seed) -> Trajectory:
    scalars = {}
    if loss is not None:
        scalars["loss"] = np.array([loss(p) for p in pts], dtype=float)
    for name, probe in (probes or {}).items():
        series = np.full(len(pts), np.nan)
        for t in range(0, len(pts), max(1, probe_every)):
            series[t] = probe(pts[t])
        scalars[name] = series
    return Trajectory(pts, scalars, eta=eta, seed=seed)


def detect_period(
    traj: Trajectory | np.ndarray,
    max_period: int = 8,
    tol: float = 1e-8,
    tail_window: int = 64,
) -> OrbitReport:
    """Find the smallest p <= max_period with ``|theta_t - theta_{t+p}|_inf <= tol``
    over the last ``tail_window`` admissible t."""
    pts = traj.points if isinstance(traj, Trajectory) else _as_points(traj)
    n = pts.shape[0]
    if n < tail_window + max_period:
        raise PreconditionError(
            f"trajectory has {n} records, need at least tail_window + max_period = "
            f"{tail_window + max_period}"
        )
    best = np.inf
    for p in range(1, max_period + 1):
        start = n - tail_window - p
        gaps = np.max(np.abs(pts[start + p :] - pts[start : n - p]), axis=1)
        residual = float(np.max(gaps))
        best = min(best, residual)
        if residual <= tol:
            full = np.max(np.abs(pts[p:] - pts[:-p]), axis=1)
            above = np.nonzero(full > tol)[0]
            settled = int(above[-1] + 1) if above.size else 0
            return OrbitReport(p, [pts[i].copy() for i in range(n - p, n)], residual, settled)
    return OrbitReport(None, [], float(best), None)


def hessian_vector_product(grad: GradFn, theta, v, h: float | None = None) -> np.ndarray:
    """Central-difference Hessian-vector product ``(g(θ+hv) - g(θ-hv)) / 2h``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    nv = np.linalg.norm(v)
    if abs(nv - 1.0) > 1e-8:
        raise PreconditionError(f"direction must be a unit vector, got norm {nv}")
    if h is None:
        h = _CBRT_EPS * max(1.0, float(np.linalg.norm(theta)))
    if h <= 0:
        raise PreconditionError("finite-difference step must be positive")
    gp = np.asarray(grad(theta + h * v), dtype=float).reshape(-1)
    gm = np.asarray(grad(theta - h * v), dtype=float).reshape(-1)
    return (gp - gm) / (2.0 * h)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def top_eigenvalue(
    grad: GradFn,
    theta,
    tol: float = 1e-10,
    max_iters: int = 2000,
    seed: int = 0,
    v0=None,
    h: float | None = None,
) -> EigenResult:
    """Dominant Hessian eigenpair by power iteration on finite-difference HVPs.

    Stops when the Rayleigh quotient changes by at most ``tol`` (relative).
    The returned vector has its largest-magnitude entry positive.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(theta.size)
    else:
        v = np.array(v0, dtype=float).reshape(-1)
    v /= np.linalg.norm(v)
    lam_prev = None
    lam = float("nan")
    for it in range(1, max_iters + 1):
        hv = hessian_vector_product(grad, theta, v, h)
        lam = float(v @ hv)
        nrm = float(np.linalg.norm(hv))
        if nrm == 0.0:
            return EigenResult(0.0, _fix_sign(v), it)
        v_next = hv / nrm
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam) + 1e-300:
            return EigenResult(lam, _fix_sign(v_next), it)
        lam_prev = lam
        v = v_next
    raise NotConvergedError(
        f"power iteration did not converge in {max_iters} iterations", estimate=lam, iters=max_iters
    )


class SharpnessProbe:
    """Probe returning the top Hessian eigenvalue, warm-started from the
    previous call's eigenvector."""

    def __init__(self, grad: GradFn, seed: int = 0, tol: float = 1e-8, max_iters: int = 2000):
        self.grad = grad
        self.seed = seed
        self.tol = tol
        self.max_iters = max_iters
        self._v = None

    def __call__(self, theta) -> float:
        try:
            res = top_eigenvalue(
                self.grad, theta, tol=self.tol, max_iters=self.max_iters, seed=self.seed, v0=self._v
            )
        except NotConvergedError as exc:
            return float(exc.estimate)
        self._v = res.vector
        return res.lam


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of a scalar function (test oracle)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if h is None:
        h = _CBRT_EPS * max(1.0, float(np.max(np.abs(theta))))
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return out


def relative_error(a, b, floor: float = 1.0) -> float:
    """``|a - b| / max(|b|, floor)`` in the Euclidean norm."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def matrix_grad(A) -> GradFn:
    """Gradient oracle of the quadratic ``0.5 * theta^T A theta``."""
    A = np.asarray(A, dtype=float)
    return lambda theta: A @ theta
