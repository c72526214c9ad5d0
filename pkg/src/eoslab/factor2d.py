"""Scalar two-factor model ``f(x, y) = (xy - mu)^2 / 2`` and its balancing dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from eoslab.dynamics import Trajectory
from eoslab.errors import DivergenceError, PreconditionError

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class Factor2DConfig:
    mu: float = 1.0
    K: float = 1.05
    x0: float = 1.5
    y0: float = 0.8
    steps: int = 10_000

    def __post_init__(self):
        if not self.mu > 0:
            raise PreconditionError("mu must be positive")
        if not self.K > 0:
            raise PreconditionError("K must be positive")
        if self.steps < 1:
            raise PreconditionError("steps must be >= 1")

    @property
    def eta(self) -> float:
        return self.K / self.mu


def loss_2d(theta, mu: float) -> float:
    x, y = theta
    r = x * y - mu
    return 0.5 * r * r


def grad_2d(theta, mu: float) -> np.ndarray:
    x, y = theta
    r = x * y - mu
    return np.array([r * y, r * x])


def gd_2d(cfg: Factor2DConfig) -> Trajectory:
    """GD on ``(xy - mu)^2 / 2`` with ``eta = K / mu``.

    Scalar series: ``loss`` and ``product`` (``x * y``).
    """
    eta, mu = cfg.eta, cfg.mu
    bound = DIVERGENCE_FACTOR * math.sqrt(mu)
    x, y = float(cfg.x0), float(cfg.y0)
    xs, ys = [x], [y]
    failed = False
    for _ in range(cfg.steps):
        r = x * y - mu
        x, y = x - eta * r * y, y - eta * r * x
        if not (math.isfinite(x) and math.isfinite(y)) or max(abs(x), abs(y)) > bound:
            failed = True
            break
        xs.append(x)
        ys.append(y)
    pts = np.column_stack([xs, ys])
    prod = pts[:, 0] * pts[:, 1]
    r = prod - mu
    traj = Trajectory(pts, {"loss": 0.5 * r * r, "product": prod}, eta=eta)
    if failed:
        raise DivergenceError(
            f"2-D GD diverged after step {len(xs) - 1} (K={cfg.K})",
            step=len(xs) - 1,
            last_state=pts[-1].copy(),
            trajectory=traj,
        )
    return traj


def balance_gap_series(traj: Trajectory, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Steps with ``x y > mu`` and the gap ``|x - y|`` there."""
    x, y = traj.points[:, 0], traj.points[:, 1]
    steps = np.nonzero(x * y > mu)[0]
    return steps, np.abs(x - y)[steps]


def gap_strictly_decreasing(gaps: np.ndarray, floor: float = 0.0) -> bool:
    """Strict decrease of consecutive gaps, ignoring pairs once the gap is below ``floor``."""
    g = np.asarray(gaps, dtype=float)
    if g.size < 2:
        return True
    prev, nxt = g[:-1], g[1:]
    active = prev > floor
    return bool(np.all(nxt[active] < prev[active]))


@dataclass(frozen=True)
class PositivityResult:
    holds: bool
    p: float
    lhs: float


def positivity_condition(x0: float, y0: float, mu: float, K: float) -> PositivityResult:
    """Sufficient condition keeping both factors positive along the whole run.

    With ``m = |y0 - x0| / sqrt(mu)``, ``p = 4 / (m + sqrt(m^2 + 4))^2`` and
    ``q = (1 + p)^2`` it compares the larger of ``eta (x0 y0 - mu)`` and a cubic
    bound in ``K`` against ``p``.
    """
    if not (x0 > 0 and y0 > 0):
        raise PreconditionError("x0 and y0 must be positive")
    if not x0 * y0 > mu:
        raise PreconditionError(f"need x0*y0 > mu, got x0*y0={x0 * y0!r}, mu={mu!r}")
    eta = K / mu
    m = abs(y0 - x0) / math.sqrt(mu)
    m2 = m * m
    p = 4.0 / (m + math.sqrt(m2 + 4.0)) ** 2
    q = (1.0 + p) ** 2
    cubic = (
        (4.0 / 27.0) * (1.0 + K) ** 3
        + ((2.0 / 3.0) * K * K - K / 3.0 + q * K * K * m2 / (2.0 * (K + 1.0))) * q * m2
        - K
    )
    lhs = max(eta * (x0 * y0 - mu), cubic)
    return PositivityResult(lhs < p, p, lhs)


@dataclass(frozen=True)
class Hessian2D:
    matrix: np.ndarray
    eig: tuple[float, float]


def hessian_2d(x: float, y: float, mu: float) -> Hessian2D:
    """Exact Hessian ``[[y^2, 2xy - mu], [2xy - mu, x^2]]`` with ``eig[0] >= eig[1]``."""
    a, b, d = y * y, 2.0 * x * y - mu, x * x
    half_tr = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    lam1 = half_tr + rad if half_tr >= 0 else half_tr - rad
    det = a * d - b * b
    # second root from the determinant: exact 0 on the minimum manifold
    lam2 = det / lam1 if lam1 != 0 else half_tr - rad
    lam_hi, lam_lo = max(lam1, lam2), min(lam1, lam2)
    return Hessian2D(np.array([[a, b], [b, d]]), (lam_hi, lam_lo))


def difference_recursion_residual(traj: Trajectory, mu: float) -> float:
    """Max deviation of ``y' - x' = (y - x)(1 - eta (mu - x y))``, scaled by the iterate size."""
    x, y = traj.points[:-1, 0], traj.points[:-1, 1]
    xn, yn = traj.points[1:, 0], traj.points[1:, 1]
    lhs = yn - xn
    rhs = (y - x) * (1.0 - traj.eta * (mu - x * y))
    scale = np.maximum.reduce([np.abs(xn), np.abs(yn), np.abs(x), np.abs(y), np.ones_like(x)])
    return float(np.max(np.abs(lhs - rhs) / scale)) if x.size else 0.0


def product_recursion_residual(traj: Trajectory, mu: float) -> float:
    """Max deviation of ``x'y' = xy (1 + eta (mu - xy))^2 + eta (mu - xy)(x - y)^2``,
    scaled by the magnitude of the terms involved."""
    x, y = traj.points[:-1, 0], traj.points[:-1, 1]
    xn, yn = traj.points[1:, 0], traj.points[1:, 1]
    e = traj.eta * (mu - x * y)
    t1 = x * y * (1.0 + e) ** 2
    t2 = e * (x - y) ** 2
    scale = np.maximum.reduce([np.abs(t1), np.abs(t2), np.abs(xn * yn), np.full_like(x, mu)])
    return float(np.max(np.abs(xn * yn - (t1 + t2)) / scale)) if x.size else 0.0
