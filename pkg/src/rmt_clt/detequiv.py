"""Deterministic equivalents t_i(-rho), t~_j(-rho) and the first-order approximation V_n(rho).

With z = -rho and delta_j = (1/n) sum_l sigma^2_lj t_l, the N unknowns solve

    t_i = 1 / (rho + (1/n) sum_j sigma^2_ij / (1 + delta_j))

and the column quantities follow as t~_j = 1 / (rho (1 + delta_j)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConvergenceError, ValidationError
from .profile import VarianceProfile

__all__ = [
    "DeterministicEquivalent",
    "solve",
    "fixed_point_rhs",
    "coupled_residual",
    "v_n",
    "m_n",
    "trace_identity_gap",
    "d_matrix",
    "d_tilde_matrix",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class DeterministicEquivalent:
    rho: float
    t: NDArray[np.float64]
    t_tilde: NDArray[np.float64]
    residual: float
    iterations: int

    @property
    def n_rows(self) -> int:
        return self.t.size

    @property
    def n_cols(self) -> int:
        return self.t_tilde.size


def d_matrix(profile: VarianceProfile, j: int) -> NDArray[np.float64]:
    """D_j = diag(sigma^2_ij, i = 1..N), the j-th column as a diagonal matrix."""
    return np.diag(profile.sigma_sq[:, j])


def d_tilde_matrix(profile: VarianceProfile, i: int) -> NDArray[np.float64]:
    """D~_i = diag(sigma^2_ij, j = 1..n), the i-th row as a diagonal matrix."""
    return np.diag(profile.sigma_sq[i, :])


def _check_rho(rho) -> float:
    rho = float(rho)
    if not (np.isfinite(rho) and rho > 0):
        raise ValidationError(f"rho must be positive and finite, got {rho!r}")
    return rho


def fixed_point_rhs(profile: VarianceProfile, t: NDArray[np.float64], rho: float) -> NDArray[np.float64]:
    """Right-hand side of the N-equation system evaluated at ``t``."""
    s = profile.sigma_sq
    n = profile.n_cols
    delta = (t @ s) / n
    return 1.0 / (rho + (s @ (1.0 / (1.0 + delta))) / n)


def solve(
    profile: VarianceProfile,
    rho: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    t0: NDArray[np.float64] | None = None,
) -> DeterministicEquivalent:
    """Solve for t(-rho) by fixed-point iteration started at 1/rho (or ``t0``).

    The right-hand side is monotone increasing in t and maps the box
    [1/(rho + sigma2_max), 1/rho]^N into itself, so plain iteration from any
    point of the box converges: it stays squeezed between the iterates started
    at the two corners. A warm start is clipped into the box for that reason.

    Iteration stops once ``max|t - rhs(t)| <= tol``; it then keeps going while the
    residual still shrinks, down to the rounding floor, so that derived identities
    hold well below ``tol``.
    """
    rho = _check_rho(rho)
    if not (tol > 0 and np.isfinite(tol)):
        raise ValidationError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter!r}")
    N = profile.n_rows
    if t0 is None:
        t = np.full(N, 1.0 / rho)
    else:
        t = np.array(t0, dtype=np.float64)
        if t.shape != (N,):
            raise ValidationError(f"warm start has shape {t.shape}, expected ({N},)")
        t = np.clip(t, 1.0 / (rho + profile.sigma2_max), 1.0 / rho)

    floor = 2 * np.finfo(float).eps / rho
    r = fixed_point_rhs(profile, t, rho)
    res = float(np.max(np.abs(r - t)))
    it = 0
    while res > tol and it < max_iter:
        t = r
        r = fixed_point_rhs(profile, t, rho)
        res = float(np.max(np.abs(r - t)))
        it += 1
    while tol >= res > floor and it < max_iter:
        r_new = fixed_point_rhs(profile, r, rho)
        res_new = float(np.max(np.abs(r_new - r)))
        if res_new >= res:
            break
        t, r, res = r, r_new, res_new
        it += 1
    if res > tol:
        raise ConvergenceError(
            f"fixed point did not converge in {max_iter} iterations (residual {res:.3e}, rho={rho})",
            residual=res, iterations=it,
        )
    delta = (t @ profile.sigma_sq) / profile.n_cols
    t_tilde = 1.0 / (rho * (1.0 + delta))
    t.setflags(write=False)
    t_tilde.setflags(write=False)
    return DeterministicEquivalent(rho, t, t_tilde, res, it)


def _check_match(de: DeterministicEquivalent, profile: VarianceProfile) -> None:
    if (de.n_rows, de.n_cols) != profile.shape:
        raise ValidationError(
            f"deterministic equivalent is {de.n_rows}x{de.n_cols} but profile is "
            f"{profile.n_rows}x{profile.n_cols}"
        )


def coupled_residual(de: DeterministicEquivalent, profile: VarianceProfile) -> float:
    """Max residual of the coupled N + n system in (t, t~)."""
    _check_match(de, profile)
    s, n, rho = profile.sigma_sq, profile.n_cols, de.rho
    t_new = 1.0 / (rho * (1.0 + (s @ de.t_tilde) / n))
    tt_new = 1.0 / (rho * (1.0 + (de.t @ s) / n))
    return float(max(np.max(np.abs(t_new - de.t)), np.max(np.abs(tt_new - de.t_tilde))))


def v_n(de: DeterministicEquivalent, profile: VarianceProfile) -> float:
    """Closed-form first-order approximation V_n(rho) of E (1/N) log det(YY* + rho I)."""
    _check_match(de, profile)
    s = profile.sigma_sq
    N, n = profile.shape
    t = de.t
    delta = (t @ s) / n
    value = (
        -np.sum(np.log(t)) / N
        + np.sum(np.log1p(delta)) / N
        - float(t @ s @ (1.0 / (1.0 + delta))) / (N * n)
    )
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError("V_n evaluated to a non-finite value")
    return value


def m_n(de: DeterministicEquivalent) -> float:
    """(1/N) sum_i t_i, the Stieltjes transform of the approximating measure at -rho."""
    return float(np.mean(de.t))


def trace_identity_gap(de: DeterministicEquivalent) -> float:
    """sum t - sum t~ - (N - n)/rho, which vanishes at the exact solution."""
    return float(np.sum(de.t) - np.sum(de.t_tilde) - (de.n_rows - de.n_cols) / de.rho)
