"""One-dimensional objectives, stable-oscillation conditions and period-2 orbits.

Every built-in :class:`ScalarFunction` answers derivative requests in closed
form.  The condition checkers never fall back to finite differences: the
margins involve third and fourth derivatives, where difference noise would
swamp the sign.
"""

from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial as _Poly
from scipy.optimize import brentq

from eoslab.dynamics import Trajectory
from eoslab.errors import (
    DivergenceError,
    NoOrbitError,
    NotApplicableError,
    PreconditionError,
    UnsupportedOrderError,
)

MIN_GRAD_TOL = 1e-9
MIN_CURV_TOL = 1e-9
# derivative values below ZERO_TOL * max(1, f'') count as exact zeros
ZERO_TOL = 1e-12
DIVERGENCE_FACTOR = 1e6

ETA_MU_MONOTONE = math.sqrt(4.5) - 1.0
ETA_MU_LOCAL = math.sqrt(5.0) - 1.0
ETA_MU_EXISTS = 1.5


class ScalarFunction(ABC):
    """A scalar objective with exact derivatives up to ``max_order``."""

    max_order: int = 16

    @property
    def scale(self) -> float:
        """Characteristic magnitude of the region of interest (divergence guard)."""
        return 1.0

    @abstractmethod
    def _derivatives(self, x: float, k: int) -> list[float]:
        ...

    def derivatives(self, x: float, k: int) -> list[float]:
        if k < 0:
            raise ValueError("derivative order must be non-negative")
        if k > self.max_order:
            raise UnsupportedOrderError(
                f"{type(self).__name__} supports derivatives up to order {self.max_order}, got {k}"
            )
        return [float(d) for d in self._derivatives(float(x), k)]

    def value(self, x):
        if np.ndim(x):
            return np.array([self.derivatives(xi, 0)[0] for xi in np.ravel(x)]).reshape(np.shape(x))
        return self.derivatives(x, 0)[0]

    def grad(self, x: float) -> float:
        return self.derivatives(x, 1)[1]

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class Quartic(ScalarFunction):
    """``f(x) = (x^2 - mu)^2 / 4``."""

    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise PreconditionError("mu must be positive")

    @property
    def scale(self):
        return math.sqrt(self.mu)

    def _derivatives(self, x, k):
        mu = self.mu
        out = [0.25 * (x * x - mu) ** 2, x * x * x - mu * x, 3.0 * x * x - mu, 6.0 * x, 6.0]
        return (out + [0.0] * max(0, k - 4))[: k + 1]

    def value(self, x):
        x = np.asarray(x, dtype=float) if np.ndim(x) else x
        return 0.25 * (x * x - self.mu) ** 2

    def grad(self, x):
        return x * x * x - self.mu * x


@dataclass(frozen=True)
class Quadratic(ScalarFunction):
    """``f(x) = lam * (x - center)^2 / 2``."""

    lam: float = 1.0
    center: float = 0.0

    def _derivatives(self, x, k):
        r = x - self.center
        out = [0.5 * self.lam * r * r, self.lam * r, self.lam]
        return (out + [0.0] * max(0, k - 2))[: k + 1]

    def value(self, x):
        r = (np.asarray(x, dtype=float) if np.ndim(x) else x) - self.center
        return 0.5 * self.lam * r * r

    def grad(self, x):
        return self.lam * (x - self.center)


@dataclass(frozen=True)
class ScaledSine(ScalarFunction):
    """``f(x) = amplitude * sin(x)``."""

    amplitude: float = 1.0

    def _derivatives(self, x, k):
        s, c = math.sin(x), math.cos(x)
        cycle = (s, c, -s, -c)
        return [self.amplitude * cycle[j % 4] for j in range(k + 1)]

    def value(self, x):
        return self.amplitude * np.sin(x)

    def grad(self, x):
        return self.amplitude * math.cos(x)


@dataclass(frozen=True)
class Tanh(ScalarFunction):
    """``g(x) = tanh(x)``; derivatives are polynomials in ``tanh(x)``."""

    def _derivatives(self, x, k):
        t = math.tanh(x)
        p = _Poly([0.0, 1.0])
        one_minus_t2 = _Poly([1.0, 0.0, -1.0])
        out = []
        for _ in range(k + 1):
            out.append(float(p(t)))
            p = p.deriv() * one_minus_t2
        return out

    def value(self, x):
        return np.tanh(x)


class Polynomial(ScalarFunction):
    """``f(x) = sum_i coeffs[i] * x**i``."""

    def __init__(self, coeffs):
        self.coeffs = tuple(float(c) for c in coeffs)
        self._p = _Poly(self.coeffs)

    def __repr__(self):
        return f"Polynomial({list(self.coeffs)})"

    def _derivatives(self, x, k):
        out, p = [], self._p
        for _ in range(k + 1):
            out.append(float(p(x)))
            p = p.deriv()
        return out

    def value(self, x):
        return self._p(x)


class SquaredLossOf(ScalarFunction):
    """``f(x) = (g(x) - y)^2``; derivatives by the Leibniz rule on ``h = g - y``."""

    def __init__(self, inner: ScalarFunction, target: float):
        self.inner = inner
        self.target = float(target)
        self.max_order = inner.max_order

    def __repr__(self):
        return f"SquaredLossOf({self.inner!r}, {self.target})"

    def _derivatives(self, x, k):
        h = self.inner.derivatives(x, k)
        h[0] -= self.target
        return [sum(math.comb(n, j) * h[j] * h[n - j] for j in range(n + 1)) for n in range(k + 1)]

    def value(self, x):
        r = self.inner.value(x) - self.target
        return r * r


class Custom(ScalarFunction):
    """User-supplied oracle ``fn(x, k) -> [f(x), f'(x), ..., f^(k)(x)]`` (exact)."""

    def __init__(self, fn: Callable[[float, int], list], max_order: int, name: str = "custom"):
        self.fn = fn
        self.max_order = int(max_order)
        self.name = name

    def __repr__(self):
        return f"Custom({self.name}, max_order={self.max_order})"

    def _derivatives(self, x, k):
        out = list(self.fn(x, k))
        if len(out) != k + 1:
            raise ValueError(f"custom oracle returned {len(out)} values for order {k}")
        return out


def derivatives(f: ScalarFunction, x: float, k: int) -> list[float]:
    """``[f(x), f'(x), ..., f^(k)(x)]``."""
    return f.derivatives(x, k)


def _is_zero(value: float, curvature: float) -> bool:
    return abs(value) <= ZERO_TOL * max(1.0, abs(curvature))


def _require_minimum(d: list[float], x_bar: float):
    if not (abs(d[1]) <= MIN_GRAD_TOL and d[2] > MIN_CURV_TOL):
        raise PreconditionError(
            f"x_bar={x_bar} is not a local minimum: f'={d[1]:.3e}, f''={d[2]:.3e}"
        )


@dataclass(frozen=True)
class ConditionResult:
    applicable: bool
    margin: float
    f2: float
    f3: float
    f4: float


def check_condition_third_order(f: ScalarFunction, x_bar: float) -> ConditionResult:
    """``f'''(x_bar) != 0`` and ``3 f'''^2 - f'' f'''' > 0`` at a local minimum."""
    d = f.derivatives(x_bar, 4)
    _require_minimum(d, x_bar)
    f2, f3, f4 = d[2], d[3], d[4]
    margin = 3.0 * f3 * f3 - f2 * f4
    return ConditionResult(not _is_zero(f3, f2) and margin > 0, margin, f2, f3, f4)


class HigherOrderOutcome(enum.Enum):
    STABLE_OSCILLATION = "stable_oscillation"
    NOT_STABLE = "not_stable"
    ALL_ZERO = "all_zero"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class HigherOrderResult:
    outcome: HigherOrderOutcome
    k: int | None
    value: float
    next_value: float | None = None
    # odd k with f^(k) < 0: the check ran on the mirror f(-x)
    mirrored: bool = False


def check_condition_higher_order(f: ScalarFunction, x_bar: float) -> HigherOrderResult:
    """Classify a minimum with ``f'''(x_bar) = 0`` by its lowest non-zero derivative.

    Even k needs ``f^(k) < 0``; odd k needs ``f^(k+1) < 0``.  For odd k with
    ``f^(k) < 0`` the function is mirrored (``x -> -x``), which leaves the
    even-order test on ``f^(k+1)`` unchanged.
    """
    d = f.derivatives(x_bar, f.max_order)
    _require_minimum(d, x_bar)
    f2 = d[2]
    if not _is_zero(d[3], f2):
        raise PreconditionError(
            f"f'''(x_bar)={d[3]:.3e} is non-zero; use check_condition_third_order"
        )
    for k in range(4, f.max_order + 1):
        if _is_zero(d[k], f2):
            continue
        if k % 2 == 0:
            ok = d[k] < 0
            return HigherOrderResult(
                HigherOrderOutcome.STABLE_OSCILLATION if ok else HigherOrderOutcome.NOT_STABLE, k, d[k]
            )
        mirrored = d[k] < 0
        if k + 1 > f.max_order:
            return HigherOrderResult(HigherOrderOutcome.UNDETERMINED, k, d[k], None, mirrored)
        nxt = d[k + 1]
        ok = nxt < 0 and not _is_zero(nxt, f2)
        return HigherOrderResult(
            HigherOrderOutcome.STABLE_OSCILLATION if ok else HigherOrderOutcome.NOT_STABLE,
            k,
            d[k],
            nxt,
            mirrored,
        )
    return HigherOrderResult(HigherOrderOutcome.ALL_ZERO, None, 0.0)


def check_l2_condition(g: ScalarFunction, x_bar: float, y: float) -> bool:
    """Whether ``(g(x) - y)^2`` admits stable oscillation at a root of ``g - y``."""
    d = g.derivatives(x_bar, 3)
    if abs(d[0] - y) > 1e-9:
        raise PreconditionError(f"g(x_bar)={d[0]!r} does not match target y={y!r}")
    g1, g2, g3 = d[1], d[2], d[3]
    return abs(g1) > ZERO_TOL and g1 * g3 < 6.0 * g2 * g2


class WindowKind(enum.Enum):
    THIRD_ORDER = "third_order"
    HIGHER_ORDER_ODD = "higher_order_odd"
    HIGHER_ORDER_EVEN = "higher_order_even"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class EtaWindow:
    lower: float
    upper: float
    validity: WindowKind
    # the start point x0 for which a 2-step return exists inside the window
    x0: float = float("nan")


def eta_window(f: ScalarFunction, x_bar: float, eps: float) -> EtaWindow:
    """Learning-rate interval above ``2/f''`` containing a 2-step return from ``x_bar - eps``."""
    d = f.derivatives(x_bar, 4)
    _require_minimum(d, x_bar)
    f2, f3 = d[2], d[3]
    if not _is_zero(f3, f2):
        cond = check_condition_third_order(f, x_bar)
        if not cond.applicable:
            raise NotApplicableError(f"third-order margin {cond.margin:.3e} is not positive")
        if not eps * f3 > 0:
            raise PreconditionError("eps must have the sign of f'''(x_bar)")
        denom = f2 - eps * f3
        if denom <= 0:
            raise PreconditionError(f"eps={eps} is too large: f'' - eps*f''' = {denom:.3e}")
        return EtaWindow(2.0 / f2, 2.0 / denom, WindowKind.THIRD_ORDER, x_bar - eps)

    res = check_condition_higher_order(f, x_bar)
    if res.outcome is not HigherOrderOutcome.STABLE_OSCILLATION:
        raise NotApplicableError(f"higher-order check returned {res.outcome.value}")
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    k = res.k
    if k % 2 == 0:
        denom = f2 + res.value * eps ** (k - 2)
        kind, x0 = WindowKind.HIGHER_ORDER_EVEN, x_bar - eps
    else:
        denom = f2 - abs(res.value) * eps ** (k - 2)
        kind = WindowKind.HIGHER_ORDER_ODD
        x0 = x_bar + eps if res.mirrored else x_bar - eps
    if denom <= 0:
        raise PreconditionError(f"eps={eps} is too large for the order-{k} window")
    return EtaWindow(2.0 / f2, 2.0 / denom, kind, x0)


def two_step_return(f: ScalarFunction, x0: float, eta: float) -> float:
    """``x_2 - x_0`` after two GD steps."""
    x1 = x0 - eta * f.grad(x0)
    return x1 - eta * f.grad(x1) - x0


def find_two_cycle_eta(f: ScalarFunction, x_bar: float, eps: float, xtol: float = 1e-15) -> float:
    """Root of ``two_step_return`` inside :func:`eta_window` (brentq bracketing)."""
    win = eta_window(f, x_bar, eps)
    lo, hi = two_step_return(f, win.x0, win.lower), two_step_return(f, win.x0, win.upper)
    if lo * hi > 0:
        raise NotApplicableError(
            f"no sign change of x2 - x0 across the window ({lo:.3e}, {hi:.3e}); eps too large?"
        )
    return brentq(lambda e: two_step_return(f, win.x0, e), win.lower, win.upper, xtol=xtol)


class Stability(enum.Enum):
    CONVERGENT_MONOTONE = "convergent_monotone"
    CONVERGENT_OSCILLATING = "convergent_oscillating"
    EXISTS_UNSTABLE = "exists_unstable"
    NONE = "none"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class OrbitPrediction:
    x_low: float
    x_high: float
    eta: float
    mu: float
    stability: Stability

    @property
    def points(self) -> tuple[float, float]:
        return (self.x_low, self.x_high)


def classify_stability(eta_mu: float) -> Stability:
    if eta_mu == 1.0:
        return Stability.DEGENERATE
    if eta_mu <= ETA_MU_MONOTONE:
        return Stability.CONVERGENT_MONOTONE
    if eta_mu < ETA_MU_LOCAL:
        return Stability.CONVERGENT_OSCILLATING
    if eta_mu <= ETA_MU_EXISTS:
        return Stability.EXISTS_UNSTABLE
    return Stability.NONE


def solve_period2(mu: float, eta: float) -> OrbitPrediction:
    """Closed-form period-2 orbit of GD on ``(x^2 - mu)^2 / 4``.

    The orbit points are the positive roots of
    ``x^4 - (mu + 1/eta) x^2 + 1/eta^2 = 0``.  The larger root in ``u = x^2``
    is computed directly and the smaller one from the product ``1/eta^2``.
    """
    if not (mu > 0 and eta > 0):
        raise PreconditionError("mu and eta must be positive")
    if eta * mu < 1.0:
        raise NoOrbitError(f"eta*mu={eta * mu} < 1: GD converges to the minimum, no 2-cycle")
    inv = 1.0 / eta
    # (mu + 1/eta)^2 - 4/eta^2 factored to avoid cancellation as eta*mu -> 1
    disc = (mu - inv) * (mu + 3.0 * inv)
    u_high = 0.5 * (mu + inv + math.sqrt(max(disc, 0.0)))
    u_low = inv * inv / u_high
    return OrbitPrediction(math.sqrt(u_low), math.sqrt(u_high), eta, mu, classify_stability(eta * mu))


def gd_1d(f: ScalarFunction, x0: float, eta: float, steps: int) -> Trajectory:
    """Plain GD ``x <- x - eta f'(x)`` with per-step loss.

    Raises :class:`DivergenceError` (partial trajectory attached) once an iterate
    is non-finite or exceeds ``1e6 * f.scale`` in magnitude.
    """
    if steps < 1:
        raise PreconditionError("steps must be >= 1")
    grad = f.grad
    bound = DIVERGENCE_FACTOR * f.scale
    xs = [float(x0)]
    x = float(x0)
    failed = False
    for _ in range(steps):
        x = x - eta * grad(x)
        if not math.isfinite(x) or abs(x) > bound:
            failed = True
            break
        xs.append(x)
    pts = np.array(xs)
    traj = Trajectory(pts, {"loss": np.asarray(f.value(pts), dtype=float)}, eta=eta)
    if failed:
        raise DivergenceError(
            f"GD diverged after step {len(xs) - 1} (eta={eta})",
            step=len(xs) - 1,
            last_state=pts[-1:].copy(),
            trajectory=traj,
        )
    return traj


def sharpness_1d(f: ScalarFunction, x) -> float:
    """For a scalar objective the sharpness is just ``f''(x)``."""
    return f.derivatives(x, 2)[2]
