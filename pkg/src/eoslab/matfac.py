"""Matrix factorization beyond the stability threshold.

Two training problems share a target ``C = X0 X0^T``:

* symmetric: ``L(X) = ||X X^T - C||_F^2 / 4``;
* quasi-symmetric: ``L(Y, Z) = ||Y Z^T - C||_F^2 / 2`` started near
  ``(alpha X0, X0 / alpha)``.

With ``eta = 1/sigma1^2 + beta`` both reduce, along the leading singular
direction, to the scalar quartic with rate ``1 + beta sigma1^2``, which is
what :func:`eoslab.scalar1d.solve_period2` predicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from eoslab.dynamics import Trajectory
from eoslab.errors import DivergenceError, NotConvergedError, PreconditionError
from eoslab.scalar1d import solve_period2

BETA_SIGMA_MAX = 0.121
ON_MANIFOLD_TOL = 1e-8
GAP_TOL = 1e-8
# a leading projection below this fraction of the perturbation norm counts as zero
PROJECTION_TOL = 1e-12
DIVERGENCE_BOUND = 1e8


# --------------------------------------------------------------------- SVD


@dataclass
class SvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def _complete_columns(Q: np.ndarray, missing: np.ndarray) -> None:
    """Overwrite columns ``missing`` of ``Q`` with unit vectors orthogonal to the rest."""
    m = Q.shape[0]
    keep = [j for j in range(Q.shape[1]) if j not in set(missing.tolist())]
    basis = [Q[:, j] for j in keep]
    for j in missing:
        best, best_norm = None, -1.0
        for e in np.eye(m):
            r = e.copy()
            for _ in range(2):
                for b in basis:
                    r -= (b @ r) * b
            nr = np.linalg.norm(r)
            if nr > best_norm:
                best, best_norm = r, nr
        best = best / best_norm
        Q[:, j] = best
        basis.append(best)


def svd(M, tol: float | None = None, max_sweeps: int = 60) -> SvdResult:
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Singular values are returned in non-increasing order; each left singular
    vector has its largest-magnitude entry positive.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2:
        raise PreconditionError("svd expects a 2-D array")
    if not np.all(np.isfinite(A)):
        raise PreconditionError("matrix has non-finite entries")
    transpose = A.shape[0] < A.shape[1]
    if transpose:
        A = A.T.copy()
    m, n = A.shape
    if tol is None:
        tol = m * np.finfo(float).eps
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai, aj = A[:, i], A[:, j]
                a, b, g = ai @ ai, aj @ aj, ai @ aj
                if g == 0.0 or abs(g) <= tol * math.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                A[:, [i, j]] = np.column_stack([c * ai - s * aj, s * ai + c * aj])
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i], V[:, j] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    else:
        raise NotConvergedError(f"Jacobi SVD did not converge in {max_sweeps} sweeps", iters=max_sweeps)

    sigma = np.linalg.norm(A, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, A, V = sigma[order], A[:, order], V[:, order]
    small = sigma <= max(sigma[0] if n else 0.0, 1e-300) * n * np.finfo(float).eps
    U = np.zeros_like(A)
    U[:, ~small] = A[:, ~small] / sigma[~small]
    if np.any(small):
        sigma[small] = 0.0
        _complete_columns(U, np.nonzero(small)[0])
    for k in range(n):
        if U[np.argmax(np.abs(U[:, k])), k] < 0:
            U[:, k] *= -1.0
            V[:, k] *= -1.0
    if transpose:
        U, V = V, U
    return SvdResult(U, sigma, V)


def top_singular_value(M) -> float:
    """Spectral norm via LAPACK; used for cheap per-step tracking."""
    return float(np.linalg.norm(M, 2))


# ------------------------------------------------- Hessian eigenvector / cross section


@dataclass
class HessianEigvec:
    dX: np.ndarray
    dY: np.ndarray
    C1: float
    C2: float
    lam: float


def _check_manifold(X, Y, C):
    if C is None:
        return
    res = np.linalg.norm(X @ Y - C)
    if res > ON_MANIFOLD_TOL * max(1.0, np.linalg.norm(C)):
        raise PreconditionError(f"XY is off the minimum manifold: ||XY - C||_F = {res:.3e}")


def leading_hessian_eigvec(X, Y, C=None) -> HessianEigvec:
    """Closed-form top eigenvector of the Hessian of ``||XY - C||_F^2 / 2`` at a minimum.

    ``dX = C1 u_x1 u_y1^T`` and ``dY = C2 v_x1 v_y1^T`` with
    ``(C1, C2) = (sigma_y1, sigma_x1) / sqrt(sigma_x1^2 + sigma_y1^2)``; the
    eigenvalue is ``sigma_x1^2 + sigma_y1^2``.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    _check_manifold(X, Y, C)
    sx, sy = svd(X), svd(Y)
    for name, s in (("X", sx), ("Y", sy)):
        if s.sigma.size > 1 and s.sigma[0] - s.sigma[1] <= GAP_TOL * max(1.0, s.sigma[0]):
            raise PreconditionError(f"top singular value of {name} is not simple")
    if abs(sx.V[:, 0] @ sy.U[:, 0]) < 1e-12:
        raise PreconditionError("v_x1 is orthogonal to u_y1")
    a, b = sx.sigma[0], sy.sigma[0]
    r = math.hypot(a, b)
    C1, C2 = b / r, a / r
    dX = C1 * np.outer(sx.U[:, 0], sy.U[:, 0])
    dY = C2 * np.outer(sx.V[:, 0], sy.V[:, 0])
    return HessianEigvec(dX, dY, C1, C2, a * a + b * b)


@dataclass(frozen=True)
class CrossSection:
    f2: float
    f3: float
    f4: float
    margin: float


def cross_section_condition(X, Y, dX, dY, C=None) -> CrossSection:
    """Derivatives at 0 of ``t -> ||(X + t dX)(Y + t dY) - C||^2 / 2`` on the manifold.

    With ``A = dX Y + X dY`` and ``B = dX dY`` the restriction is
    ``t^2 |A|^2 / 2 + t^3 <A, B> + t^4 |B|^2 / 2``.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    dX, dY = np.asarray(dX, dtype=float), np.asarray(dY, dtype=float)
    _check_manifold(X, Y, C)
    A = dX @ Y + X @ dY
    B = dX @ dY
    f2 = float(np.sum(A * A))
    f3 = 6.0 * float(np.sum(A * B))
    f4 = 12.0 * float(np.sum(B * B))
    return CrossSection(f2, f3, f4, 3.0 * f3 * f3 - f2 * f4)


# ------------------------------------------------------------------ losses


def sym_loss(X, C) -> float:
    R = X @ X.T - C
    return 0.25 * float(np.sum(R * R))


def sym_grad(X, C) -> np.ndarray:
    return (X @ X.T - C) @ X


def quasi_loss(Y, Z, C) -> float:
    R = Y @ Z.T - C
    return 0.5 * float(np.sum(R * R))


def quasi_grad(Y, Z, C) -> tuple[np.ndarray, np.ndarray]:
    R = Y @ Z.T - C
    return R @ Z, R.T @ Y


def sigma2_admissible(sigma1: float, sigma2: float, alpha: float, eta: float) -> bool:
    """Second-singular-value constraint for the quasi-symmetric orbit."""
    if not (sigma1 > sigma2 >= 0 and alpha > 0 and eta > 0):
        raise PreconditionError("need sigma1 > sigma2 >= 0, alpha > 0, eta > 0")
    r2 = (sigma2 / sigma1) ** 2
    s = eta * sigma1 * sigma1
    a2 = alpha * alpha
    return max(s / a2 * (1.0 + a2 * a2 * r2), s * a2 * (1.0 + r2 / (a2 * a2))) <= 2.0


# ------------------------------------------------------------------- orbits


@dataclass
class MatfacOrbit:
    mode: str  # "symmetric" or "quasi_symmetric"
    sigma1: float
    beta: float
    params: dict
    orbit_matrices: tuple

    @property
    def top_values(self) -> np.ndarray:
        """Predicted top singular values on the 2-cycle, ascending."""
        if self.mode == "symmetric":
            xs = (1.0 + self.params["delta2"], 1.0 + self.params["delta1"])
        else:
            xs = (self.params["rho2"], self.params["rho1"])
        return self.sigma1 * np.array(xs)

    @property
    def ratio(self) -> float:
        lo, hi = self.top_values
        return hi / lo


@dataclass
class MatfacRun:
    """Per-step summary of a factorization run.

    ``traj.points`` holds the tracked top singular values (one column per
    factor) and ``traj.scalars['loss']`` the loss.  ``final`` holds the last
    factor matrices and ``flags`` the precondition checks.
    """

    traj: Trajectory
    orbit: MatfacOrbit
    final: tuple
    eps: float
    flags: dict = field(default_factory=dict)
    iterates: list | None = None

    def tail_values(self, column: int = 0) -> np.ndarray:
        """Last two tracked values of one column, ascending."""
        return np.sort(self.traj.points[-2:, column])


def _leading(X0):
    s = svd(X0)
    return s, s.sigma[0], (s.sigma[1] if s.sigma.size > 1 else 0.0), s.U[:, 0], s.V[:, 0]


def _projection_nonzero(D, u1, v1) -> bool:
    return bool(abs(u1 @ D @ v1) > PROJECTION_TOL * np.linalg.norm(D))


def _require_beta(beta, sigma1, strict, flags):
    flags["beta_in_range"] = 0.0 < beta * sigma1 * sigma1 <= BETA_SIGMA_MAX
    if strict and not flags["beta_in_range"]:
        raise PreconditionError(f"beta*sigma1^2 = {beta * sigma1 ** 2:.4f} is outside (0, 0.121]")


def symmetric_orbit(X0, beta: float) -> MatfacOrbit:
    _, s1, _, u1, v1 = _leading(X0)
    pred = solve_period2(1.0, 1.0 + beta * s1 * s1)
    d1, d2 = pred.x_high - 1.0, pred.x_low - 1.0
    P = s1 * np.outer(u1, v1)
    return MatfacOrbit("symmetric", s1, beta, {"delta1": d1, "delta2": d2}, (X0 + d1 * P, X0 + d2 * P))


def quasi_orbit(X0, alpha: float, beta: float) -> MatfacOrbit:
    _, s1, _, u1, v1 = _leading(X0)
    pred = solve_period2(1.0, 1.0 + beta * s1 * s1)
    r1, r2 = pred.x_high, pred.x_low
    P = s1 * np.outer(u1, v1)
    Y0, Z0 = alpha * X0, X0 / alpha
    mats = (
        (Y0 + (r1 - alpha) * P, Z0 + (r1 - 1.0 / alpha) * P),
        (Y0 + (r2 - alpha) * P, Z0 + (r2 - 1.0 / alpha) * P),
    )
    return MatfacOrbit("quasi_symmetric", s1, beta, {"rho1": r1, "rho2": r2, "alpha": alpha}, mats)


def gd_symmetric(
    X0, dX0, beta: float, steps: int, strict: bool = True, record: bool = False
) -> MatfacRun:
    """GD on ``||X X^T - X0 X0^T||^2 / 4`` from ``X0 + dX0`` with ``eta = 1/sigma1^2 + beta``.

    ``record=True`` keeps every iterate (flattened) in ``iterates``.
    """
    X0 = np.asarray(X0, dtype=float)
    dX0 = np.asarray(dX0, dtype=float)
    if dX0.shape != X0.shape:
        raise PreconditionError("dX0 must have the shape of X0")
    _, s1, s2, u1, v1 = _leading(X0)
    eta = 1.0 / (s1 * s1) + beta
    flags: dict = {}
    _require_beta(beta, s1, strict, flags)
    flags["sigma2_stable"] = eta * s2 * s2 < 1.0
    if strict and not flags["sigma2_stable"]:
        raise PreconditionError(f"eta*sigma2^2 = {eta * s2 * s2:.4f} >= 1")
    # measure-zero case: proceed and let round-off break the symmetry
    flags["leading_projection_nonzero"] = _projection_nonzero(dX0, u1, v1)
    C = X0 @ X0.T
    orbit = symmetric_orbit(X0, beta)

    X = X0 + dX0
    tops, losses = [top_singular_value(X)], [sym_loss(X, C)]
    kept = [X.ravel().copy()] if record else None
    for _ in range(steps):
        X = X - eta * ((X @ X.T - C) @ X)
        if record:
            kept.append(X.ravel().copy())
        if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > DIVERGENCE_BOUND:
            traj = Trajectory(np.array(tops), {"loss": np.array(losses)}, eta=eta)
            raise DivergenceError("symmetric factorization diverged", len(tops) - 1, X, traj)
        tops.append(top_singular_value(X))
        losses.append(sym_loss(X, C))
    traj = Trajectory(np.array(tops), {"loss": np.array(losses)}, eta=eta)
    return MatfacRun(traj, orbit, (X,), float(np.linalg.norm(dX0)), flags, kept)


def gd_quasisymmetric(
    X0, alpha: float, dY0, dZ0, beta: float, steps: int, strict: bool = True, record: bool = False
) -> MatfacRun:
    """GD on ``||Y Z^T - X0 X0^T||^2 / 2`` from ``(alpha X0 + dY0, X0/alpha + dZ0)``.

    ``eta = 1/sigma1^2 + beta`` is measured against the flattest (``alpha = 1``)
    point of the minimum manifold.
    """
    X0 = np.asarray(X0, dtype=float)
    dY0, dZ0 = np.asarray(dY0, dtype=float), np.asarray(dZ0, dtype=float)
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    if dY0.shape != X0.shape or dZ0.shape != X0.shape:
        raise PreconditionError("perturbations must have the shape of X0")
    _, s1, s2, u1, v1 = _leading(X0)
    eta = 1.0 / (s1 * s1) + beta
    flags: dict = {}
    _require_beta(beta, s1, strict, flags)
    flags["sigma2_admissible"] = sigma2_admissible(s1, s2, alpha, eta)
    if strict and not flags["sigma2_admissible"]:
        raise PreconditionError("sigma2 admissibility fails; pass strict=False to simulate anyway")
    flags["leading_projection_nonzero"] = _projection_nonzero(dY0, u1, v1) and _projection_nonzero(dZ0, u1, v1)
    C = X0 @ X0.T
    orbit = quasi_orbit(X0, alpha, beta)

    Y, Z = alpha * X0 + dY0, X0 / alpha + dZ0
    tops = [(top_singular_value(Y), top_singular_value(Z))]
    losses = [quasi_loss(Y, Z, C)]
    kept = [np.concatenate([Y.ravel(), Z.ravel()])] if record else None
    for _ in range(steps):
        R = Y @ Z.T - C
        Y, Z = Y - eta * (R @ Z), Z - eta * (R.T @ Y)
        if record:
            kept.append(np.concatenate([Y.ravel(), Z.ravel()]))
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))) or max(
            np.max(np.abs(Y)), np.max(np.abs(Z))
        ) > DIVERGENCE_BOUND:
            traj = Trajectory(np.array(tops), {"loss": np.array(losses)}, eta=eta)
            raise DivergenceError("quasi-symmetric factorization diverged", len(tops) - 1, (Y, Z), traj)
        tops.append((top_singular_value(Y), top_singular_value(Z)))
        losses.append(quasi_loss(Y, Z, C))
    traj = Trajectory(np.array(tops), {"loss": np.array(losses)}, eta=eta)
    eps = float(max(np.linalg.norm(dY0), np.linalg.norm(dZ0)))
    return MatfacRun(traj, orbit, (Y, Z), eps, flags, kept)


def off_leading_residual(X, X0) -> float:
    """Frobenius norm of ``X - X0`` with its ``u1 v1^T`` component removed."""
    _, _, _, u1, v1 = _leading(X0)
    D = np.asarray(X, dtype=float) - X0
    P = np.outer(u1, v1)
    return float(np.linalg.norm(D - np.sum(D * P) * P))


def perturbation(shape, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian matrix rescaled to Frobenius norm ``scale``."""
    D = rng.standard_normal(shape)
    return scale * D / np.linalg.norm(D)
