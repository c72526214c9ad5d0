"""Single ReLU student neuron ``x -> v relu(w^T x)`` against a unit-norm teacher ``relu(e_1^T x)``.

Inputs are uniform on the unit sphere in ``R^d``.  The population loss
``E (v relu(w^T x) - relu(e_1^T x))^2`` has a closed form, and GD with
``eta = K d`` stays in ``span{e_1, w0}``, so population runs are tracked in
the reduced coordinates ``(v, w_x, w_y)``: ``w_x`` along the teacher and
``w_y >= 0`` the orthogonal residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from eoslab.dynamics import Trajectory
from eoslab.errors import DivergenceError, PreconditionError

THEOREM_K = (1.0, 1.1)
THEOREM_EPS = (0.0, 0.1)
ON_MANIFOLD_TOL = 1e-9
DIVERGENCE_BOUND = 1e6


@dataclass(frozen=True)
class NeuronState:
    v: float
    w_x: float
    w_y: float

    def __post_init__(self):
        if self.w_y < 0:
            raise PreconditionError("w_y is a magnitude and must be non-negative")

    @property
    def w_norm(self) -> float:
        return math.hypot(self.w_x, self.w_y)

    @property
    def alpha(self) -> float:
        """Angle between ``w`` and the teacher; exactly ``pi/2`` when ``w_x == 0``."""
        return math.atan2(self.w_y, self.w_x)

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.w_x, self.w_y])


@dataclass(frozen=True)
class NeuronConfig:
    d: int = 2
    K: float = 1.1
    eps: float = 0.1
    init_angle: float = math.pi / 2
    theorem_mode: bool = True

    def __post_init__(self):
        if self.d < 2:
            raise PreconditionError("d must be at least 2")
        if not (0.0 <= self.init_angle <= math.pi / 2):
            raise PreconditionError("init_angle must lie in [0, pi/2]")
        if not (self.eps > 0 and self.K > 0):
            raise PreconditionError("K and eps must be positive")
        if self.theorem_mode:
            if not THEOREM_K[0] < self.K <= THEOREM_K[1]:
                raise PreconditionError(f"theorem mode needs 1 < K <= 1.1, got K={self.K}")
            if not THEOREM_EPS[0] < self.eps <= THEOREM_EPS[1]:
                raise PreconditionError(f"theorem mode needs 0 < eps <= 0.1, got eps={self.eps}")

    @property
    def eta(self) -> float:
        return self.K * self.d

    def initial_state(self) -> NeuronState:
        c, s = math.cos(self.init_angle), math.sin(self.init_angle)
        # cos(pi/2) is 6e-17 in floating point; snap so the orthogonal start is exact
        c = 0.0 if abs(c) < 1e-15 else c
        s = 0.0 if abs(s) < 1e-15 else s
        return NeuronState(self.eps, self.eps * c, self.eps * s)


def _deltas(v: float, w_x: float, w_y: float, K: float) -> tuple[float, float, float]:
    n2 = w_x * w_x + w_y * w_y
    if n2 == 0.0:
        raise PreconditionError("w = 0: the angle to the teacher is undefined")
    a = math.atan2(w_y, w_x)
    dv = K * (-v * n2 + (w_y + (math.pi - a) * w_x) / math.pi)
    dwx = K * v * ((1.0 - v * w_x) - (a - w_x * w_y / n2) / math.pi)
    dwy = K * w_y * (-v * v + v * w_y / (math.pi * n2))
    return dv, dwx, dwy


def population_deltas(s: NeuronState, K: float) -> tuple[float, float, float]:
    """``(dv, dw_x, dw_y)`` of one population GD step with ``eta = K d``."""
    return _deltas(s.v, s.w_x, s.w_y, K)


def population_step(s: NeuronState, K: float) -> NeuronState:
    dv, dwx, dwy = _deltas(s.v, s.w_x, s.w_y, K)
    out = (s.v + dv, s.w_x + dwx, abs(s.w_y + dwy))
    if not all(math.isfinite(c) for c in out):
        raise DivergenceError("non-finite neuron state", step=1, last_state=s.as_array())
    return NeuronState(*out)


def population_loss(v: float, w_x: float, w_y: float, d: int) -> float:
    n = math.hypot(w_x, w_y)
    a = math.atan2(w_y, w_x) if n > 0 else 0.0
    cross = n * (math.sin(a) + (math.pi - a) * math.cos(a)) / math.pi
    return (v * v * n * n - 2.0 * v * cross + 1.0) / (2.0 * d)


def ambient_population_loss(v: float, w, teacher) -> float:
    w = np.asarray(w, dtype=float)
    t = np.asarray(teacher, dtype=float)
    nw, nt = np.linalg.norm(w), np.linalg.norm(t)
    a = math.acos(float(np.clip(w @ t / (nw * nt), -1.0, 1.0)))
    d = w.size
    cross = nw * nt * (math.sin(a) + (math.pi - a) * math.cos(a)) / math.pi
    return (v * v * nw * nw - 2.0 * v * cross + nt * nt) / (2.0 * d)


def ambient_population_grad(v: float, w, teacher) -> tuple[float, np.ndarray]:
    """Closed-form ``(dL/dv, dL/dw)`` in ambient coordinates, angle from ``arccos``."""
    w = np.asarray(w, dtype=float)
    t = np.asarray(teacher, dtype=float)
    d = w.size
    nw, nt = np.linalg.norm(w), np.linalg.norm(t)
    if nw == 0:
        raise PreconditionError("w = 0: the population gradient is not defined")
    a = math.acos(float(np.clip(w @ t / (nw * nt), -1.0, 1.0)))
    gv = (v * nw * nw - nw * nt * (math.sin(a) + (math.pi - a) * math.cos(a)) / math.pi) / d
    gw = (v * v * w - (v / math.pi) * ((math.pi - a) * t + nt * math.sin(a) * w / nw)) / d
    return gv, gw


def stage_one_active(s: NeuronState) -> bool:
    """True while ``v w_x <= w_x w_y / (pi |w|^2)``, i.e. ``w_y`` is not yet shrinking."""
    n2 = s.w_x * s.w_x + s.w_y * s.w_y
    return not s.v * s.w_x > s.w_x * s.w_y / (math.pi * n2)


def t1_bound(eps: float) -> int:
    """End of the first stage: ``ceil(log_{2.56}(1.35 / (pi beta^2)))``, ``beta = (1 + 1.1/pi) eps``."""
    beta = (1.0 + 1.1 / math.pi) * eps
    return math.ceil(math.log(1.35 / (math.pi * beta * beta)) / math.log(2.56))


def decay_bound(t, K: float, T1: int):
    """``0.1 (1 - 0.030 K)^(t - T1 - 4)``."""
    return 0.1 * (1.0 - 0.030 * K) ** (np.asarray(t, dtype=float) - T1 - 4)


@dataclass
class NeuronRun:
    traj: Trajectory
    stage_boundary: int | None
    T1_bound: int


def simulate_neuron(cfg: NeuronConfig, steps: int) -> NeuronRun:
    """Population GD in reduced coordinates; points are ``(v, w_x, w_y)`` per step."""
    if steps < 1:
        raise PreconditionError("steps must be >= 1")
    s0 = cfg.initial_state()
    v, wx, wy = s0.v, s0.w_x, s0.w_y
    rows = [(v, wx, wy)]
    boundary = None
    failed = False
    for t in range(steps):
        if boundary is None and wx != 0.0:
            n2 = wx * wx + wy * wy
            if v * wx > wx * wy / (math.pi * n2):
                boundary = t
        dv, dwx, dwy = _deltas(v, wx, wy, cfg.K)
        v, wx, wy = v + dv, wx + dwx, abs(wy + dwy)
        if not (math.isfinite(v) and math.isfinite(wx) and math.isfinite(wy)) or max(
            abs(v), abs(wx), wy
        ) > DIVERGENCE_BOUND:
            failed = True
            break
        rows.append((v, wx, wy))
    pts = np.array(rows)
    loss = np.array([population_loss(*r, cfg.d) for r in rows])
    traj = Trajectory(pts, {"loss": loss}, eta=cfg.eta)
    if failed:
        raise DivergenceError(
            f"neuron dynamics diverged after step {len(rows) - 1}",
            step=len(rows) - 1,
            last_state=pts[-1].copy(),
            trajectory=traj,
        )
    return NeuronRun(traj, boundary, t1_bound(cfg.eps))


def neuron_hessian_top(v: float, w_norm: float, d: int) -> float:
    """Top Hessian eigenvalue ``(|w|^2 + v^2) / d`` on the minimum manifold ``v |w| = 1``."""
    if abs(v * w_norm - 1.0) > ON_MANIFOLD_TOL:
        raise PreconditionError(
            f"v*|w| = {v * w_norm!r} is off the minimum manifold; use dynamics.top_eigenvalue"
        )
    return (w_norm * w_norm + v * v) / d


def sphere_samples(n: int, d: int, seed: int) -> np.ndarray:
    """``n`` points uniform on the unit sphere in ``R^d``."""
    if n < 1:
        raise PreconditionError("n_samples must be >= 1")
    x = np.random.default_rng(seed).standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def empirical_loss_grad(v: float, w: np.ndarray, X: np.ndarray, teacher: np.ndarray):
    """Mean squared error over samples and its gradient ``(loss, dL/dv, dL/dw)``."""
    pre = X @ w
    act = np.maximum(pre, 0.0)
    r = v * act - np.maximum(X @ teacher, 0.0)
    n = X.shape[0]
    loss = float(r @ r) / n
    gv = 2.0 * float(r @ act) / n
    gw = (2.0 * v / n) * (X.T @ (r * (pre > 0)))
    return loss, gv, gw


def empirical_neuron_gd(
    n_samples: int,
    d: int,
    seed: int,
    eta: float,
    v0: float,
    w0,
    steps: int,
    teacher=None,
    antithetic: bool = False,
) -> Trajectory:
    """Full-ambient GD on the empirical loss.

    With ``antithetic`` the sample set is ``n_samples // 2`` draws plus their
    reflections through the teacher axis, so a teacher-aligned ``w`` receives
    no orthogonal gradient (up to rounding).

    Points are ``(v, w_1..w_d)``; scalar series ``v``, ``w_x = <w, teacher>``,
    ``w_y = |w - w_x teacher|`` and ``loss`` (loss evaluated before each step,
    the last one at the final point).
    """
    t = np.zeros(d) if teacher is None else np.asarray(teacher, dtype=float)
    if teacher is None:
        t[0] = 1.0
    if antithetic:
        if n_samples < 2:
            raise PreconditionError("antithetic sampling needs n_samples >= 2")
        half = sphere_samples(n_samples // 2, d, seed)
        along = np.outer(half @ t, t)
        X = np.vstack([half, 2.0 * along - half])
    else:
        X = sphere_samples(n_samples, d, seed)
    w = np.array(w0, dtype=float)
    if w.shape != (d,):
        raise PreconditionError(f"w0 must have shape ({d},)")
    v = float(v0)
    pts = np.empty((steps + 1, d + 1))
    pts[0, 0], pts[0, 1:] = v, w
    losses = np.empty(steps + 1)
    last, failed = steps, False
    for k in range(steps):
        loss, gv, gw = empirical_loss_grad(v, w, X, t)
        losses[k] = loss
        v, w = v - eta * gv, w - eta * gw
        if not (math.isfinite(v) and np.all(np.isfinite(w))) or max(abs(v), np.max(np.abs(w))) > DIVERGENCE_BOUND:
            last, failed = k, True
            break
        pts[k + 1, 0], pts[k + 1, 1:] = v, w
    pts = pts[: last + 1]
    losses = losses[: last + 1]
    if not failed:
        losses[last] = empirical_loss_grad(pts[last, 0], pts[last, 1:], X, t)[0]
    W = pts[:, 1:]
    wx = W @ t
    wy = np.linalg.norm(W - np.outer(wx, t), axis=1)
    traj = Trajectory(pts, {"v": pts[:, 0], "w_x": wx, "w_y": wy, "loss": losses}, eta=eta, seed=seed)
    if failed:
        raise DivergenceError(
            f"empirical neuron GD diverged after step {last}", step=last, last_state=pts[-1].copy(), trajectory=traj
        )
    return traj
