"""Limiting variance profile sigma^2(x, y) on [0, 1]^2.

All integrals over [0, 1] use the composite midpoint rule on ``grid_m`` cells,
so a kernel K on the grid corresponds to the matrix K / grid_m, exactly like
a_lm = K_n(l/n, m/n) / n at finite size.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import ConvergenceError, NumericalError, SingularityError, ValidationError
from .fluctuation import log_det_i_minus

__all__ = [
    "LimitProfile",
    "KernelDiscretization",
    "midpoints",
    "solve_tau",
    "kernel_matrix",
    "fredholm_det_series",
    "hadamard_remainder",
    "theta_sq_limit",
    "theta_sq_separable",
]

DEFAULT_GRID = 128
SERIES_COST_CAP = 5e7


def midpoints(m: int) -> NDArray[np.float64]:
    return (np.arange(m, dtype=np.float64) + 0.5) / m


@dataclass(frozen=True, eq=False)
class LimitProfile:
    """Solved tau(u, -rho), tau~(v, -rho) at the grid midpoints."""

    sigma2_fn: Callable
    c: float
    grid_m: int
    rho: float
    tau: NDArray[np.float64]
    tau_tilde: NDArray[np.float64]
    sigma2_grid: NDArray[np.float64]
    residual: float
    iterations: int

    @property
    def grid(self) -> NDArray[np.float64]:
        return midpoints(self.grid_m)

    def coupled_residual(self) -> float:
        """Max violation of tau = 1/(rho(1 + int s tau~)) and tau~ = 1/(rho(1 + c int s tau))."""
        s, m, rho = self.sigma2_grid, self.grid_m, self.rho
        tau = 1.0 / (rho * (1.0 + s @ self.tau_tilde / m))
        tau_t = 1.0 / (rho * (1.0 + self.c * (self.tau @ s) / m))
        return float(max(np.max(np.abs(tau - self.tau)), np.max(np.abs(tau_t - self.tau_tilde))))


@dataclass(frozen=True, eq=False)
class KernelDiscretization:
    values: NDArray[np.float64]
    trace: float
    fredholm_det: float
    sup_bound: float

    @property
    def grid_m(self) -> int:
        return self.values.shape[0]

    @property
    def matrix(self) -> NDArray[np.float64]:
        """The operator on the grid, values / grid_m."""
        return self.values / self.grid_m


def solve_tau(
    sigma2_fn: Callable,
    c: float,
    rho: float,
    grid_m: int = DEFAULT_GRID,
    tol: float = 1e-13,
    max_iter: int = 10_000,
) -> LimitProfile:
    """Solve tau(u) = (rho + int s(u, v) / (1 + c int s(x, v) tau(x) dx) dv)^-1 on the midpoint grid."""
    c, rho = float(c), float(rho)
    if not (np.isfinite(c) and c > 0):
        raise ValidationError(f"c must be positive, got {c!r}")
    if not (np.isfinite(rho) and rho > 0):
        raise ValidationError(f"rho must be positive, got {rho!r}")
    if grid_m < 2:
        raise ValidationError("grid_m must be at least 2")
    g = midpoints(grid_m)
    s = np.broadcast_to(np.asarray(sigma2_fn(g[:, None], g[None, :]), dtype=np.float64), (grid_m, grid_m))
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValidationError("sigma^2 must be finite and strictly positive on the grid")
    s = np.array(s)

    def rhs(tau):
        inner = c * (tau @ s) / grid_m
        return 1.0 / (rho + (s @ (1.0 / (1.0 + inner))) / grid_m)

    tau = np.full(grid_m, 1.0 / rho)
    r = rhs(tau)
    res = float(np.max(np.abs(r - tau)))
    it = 0
    while res > tol and it < max_iter:
        tau = r
        r = rhs(tau)
        res = float(np.max(np.abs(r - tau)))
        it += 1
    if res > tol:
        raise ConvergenceError(f"tau iteration did not converge (residual {res:.3e})", res, it)
    tau_tilde = 1.0 / (rho * (1.0 + c * (tau @ s) / grid_m))
    return LimitProfile(sigma2_fn, c, grid_m, rho, tau, tau_tilde, s, res, it)


def kernel_matrix(lp: LimitProfile) -> KernelDiscretization:
    """K(x, y) = c int s(u,x) s(u,y) tau^2(u) du / (1 + c int s(u,x) tau(u) du)^2 on the grid."""
    s, m, c = lp.sigma2_grid, lp.grid_m, lp.c
    num = c * ((s.T * lp.tau**2) @ s) / m
    den = (1.0 + c * (lp.tau @ s) / m) ** 2
    values = num / den[:, None]
    trace = float(np.trace(values) / m)
    det = math.exp(log_det_i_minus(values / m))
    sup_bound = c * float(np.max(s)) ** 2 / lp.rho**2
    return KernelDiscretization(values, trace, det, sup_bound)


def hadamard_remainder(sup_norm: float, k_max: int, terms: int = 4000) -> float:
    """Bound sum_{k > k_max} k^(k/2) M^k / k! on the tail of the Fredholm series."""
    if sup_norm == 0:
        return 0.0
    total = 0.0
    log_m = math.log(sup_norm)
    for k in range(k_max + 1, k_max + 1 + terms):
        log_term = 0.5 * k * math.log(k) + k * log_m - math.lgamma(k + 1)
        term = math.exp(log_term) if log_term > -745 else 0.0
        total += term
        if k > 2 * sup_norm**2 + 10 and term < 1e-18 * total:
            break
    return total


def fredholm_det_series(kd: KernelDiscretization, k_max: int, cost_cap: float = SERIES_COST_CAP) -> float:
    """Partial sum through order ``k_max`` of det(1 - K) = sum_k (-1)^k / k! int det[K(x_i, x_j)].

    The k-fold midpoint sum over ordered multi-indices has k! equal copies of
    each set of distinct indices and zero for repeated ones, so each term is
    evaluated as a sum of principal k x k minors of K / grid_m.
    """
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    M = kd.matrix
    m = M.shape[0]
    cost = sum(math.comb(m, k) * k**3 for k in range(1, min(k_max, m) + 1))
    if cost > cost_cap:
        raise NumericalError(f"Fredholm series up to k={k_max} on a {m}-point grid exceeds the cost cap")
    total = 1.0
    for k in range(1, min(k_max, m) + 1):
        idx = np.array(list(itertools.combinations(range(m), k)))
        minors = M[idx[:, :, None], idx[:, None, :]]
        total += (-1) ** k * math.fsum(np.linalg.det(minors))
    return total


def theta_sq_limit(kd: KernelDiscretization, kappa: float) -> float:
    """-log det(1 - K) + kappa Tr K."""
    if not kd.fredholm_det > 0:
        raise SingularityError(f"Fredholm determinant {kd.fredholm_det!r} is not positive")
    return -math.log(kd.fredholm_det) + float(kappa) * kd.trace


def theta_sq_separable(
    d: Callable,
    d_tilde: Callable,
    c: float,
    rho: float,
    kappa: float,
    grid_m: int = DEFAULT_GRID,
    tol: float = 1e-14,
    max_iter: int = 10_000,
) -> float:
    """-log(1 - rho^2 g g~) + kappa rho^2 g g~ with g = c int d^2 tau^2, g~ = int d~^2 tau~^2.

    For sigma^2(x, y) = d(x) d~(y) the fixed point only couples through the
    scalar h = c int d tau, so tau is found with O(grid_m) work per step
    instead of building the full grid of sigma^2 values.
    """
    c, rho = float(c), float(rho)
    if not (np.isfinite(c) and c > 0):
        raise ValidationError(f"c must be positive, got {c!r}")
    if not (np.isfinite(rho) and rho > 0):
        raise ValidationError(f"rho must be positive, got {rho!r}")
    if grid_m < 2:
        raise ValidationError("grid_m must be at least 2")
    g = midpoints(grid_m)
    dx = np.broadcast_to(np.asarray(d(g), dtype=np.float64), g.shape)
    dy = np.broadcast_to(np.asarray(d_tilde(g), dtype=np.float64), g.shape)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy)) and np.all(dx > 0) and np.all(dy > 0)):
        raise ValidationError("d and d~ must be finite and strictly positive on the grid")
    tau = np.full(grid_m, 1.0 / rho)
    res = math.inf
    for _ in range(max_iter):
        h = c * float(np.mean(dx * tau))
        new = 1.0 / (rho + dx * float(np.mean(dy / (1.0 + dy * h))))
        res = float(np.max(np.abs(new - tau)))
        tau = new
        if res <= tol:
            break
    else:
        raise ConvergenceError(f"separable tau iteration did not converge (residual {res:.3e})", res, max_iter)
    tau_t = 1.0 / (rho * (1.0 + dy * c * float(np.mean(dx * tau))))
    gamma = c * float(np.mean(dx**2 * tau**2))
    gamma_t = float(np.mean(dy**2 * tau_t**2))
    prod = rho**2 * gamma * gamma_t
    if not prod < 1:
        raise SingularityError(f"1 - rho^2 gamma gamma~ = {1 - prod!r} is not positive")
    return -math.log1p(-prod) + float(kappa) * prod
