"""Bias B_n(rho) = int_rho^inf beta_n(omega) d omega of N (E I_n(rho) - V_n(rho)).

At each omega the vector w solves (I - A(omega)) w = p(omega), where A(omega) is
the variance matrix built from t(-omega) and p is linear in kappa; beta_n is the
mean of w. The integral is truncated at omega_max and the remainder is bounded
by K' / (2 omega_max^2), using |beta_n(omega)| <= K' / omega^3.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import detequiv
from .detequiv import DeterministicEquivalent, _check_match
from .errors import ConvergenceError, NumericalError, SingularityError, ValidationError
from .fluctuation import variance_matrix
from .profile import VarianceProfile

__all__ = [
    "QuadratureConfig",
    "BiasResult",
    "p_vector",
    "solve_w",
    "beta_n",
    "bias_integral",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Adaptive Gauss-Legendre settings for the bias integral.

    Panels start geometrically spaced on [rho, omega_max]; a panel is accepted
    when its ``order``-point estimate and the sum over its two halves differ by
    at most ``tol`` times its share of the interval length.
    """

    omega_max: float | None = None
    order: int = 10
    tol: float = 1e-10
    initial_panels: int = 16
    max_panels: int = 4096
    safety: float = 2.0
    solver_tol: float = 1e-12
    parallel: bool = False
    threads: int | None = None

    def resolve_omega_max(self, rho: float) -> float:
        return float(self.omega_max) if self.omega_max is not None else max(100.0 * rho, 100.0)


@dataclass(frozen=True, eq=False)
class BiasResult:
    rho: float
    kappa: float
    nodes: NDArray[np.float64]
    beta: NDArray[np.float64]
    b_n: float
    tail_bound: float
    k_prime: float
    omega_max: float
    panels: int = 0
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "kappa": self.kappa,
            "b_n": self.b_n,
            "tail_bound": self.tail_bound,
            "k_prime": self.k_prime,
            "omega_max": self.omega_max,
            "panels": self.panels,
            "n_nodes": int(self.nodes.size),
        }


def p_vector(de_omega: DeterministicEquivalent, profile: VarianceProfile, kappa: float) -> NDArray[np.float64]:
    """p_l = kappa w^2 t~_l^2 [ (w/n) sum_i s_il t_i^3 (1/n) Tr D~_i^2 T~^2 - (t~_l/n) Tr D_l^2 T^2 ].

    Here w is the shift the deterministic equivalent was solved at.
    """
    _check_match(de_omega, profile)
    kappa = float(kappa)
    n = profile.n_cols
    if kappa == 0.0:
        return np.zeros(n)
    s = profile.sigma_sq
    s2 = s * s
    omega = de_omega.rho
    t, tt = de_omega.t, de_omega.t_tilde
    row_term = (s2 @ tt**2) / n
    first = (omega / n) * ((t**3 * row_term) @ s)
    second = tt / n * (t**2 @ s2)
    return kappa * omega**2 * tt**2 * (first - second)


def _solve_system(A: NDArray[np.float64], rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    M = np.eye(A.shape[0]) - A
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"I - A is singular: {exc}") from None
    resid = np.max(np.abs(M @ x - rhs), axis=0)
    scale = np.max(np.abs(rhs), axis=0)
    if np.any(resid > 1e-10 * scale) or not np.all(np.isfinite(x)):
        raise SingularityError("linear solve of (I - A) x = rhs is inaccurate; I - A is near singular")
    return x


def solve_w(A_omega: NDArray[np.float64], p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Solve (I - A) w = p."""
    A_omega = np.asarray(A_omega, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if A_omega.ndim != 2 or A_omega.shape != (p.size, p.size):
        raise ValidationError(f"shape mismatch: A is {A_omega.shape}, p has {p.size} entries")
    if not np.any(p):
        return np.zeros_like(p)
    return _solve_system(A_omega, p)


def _beta_unit(profile: VarianceProfile, omega: float, solver_tol: float) -> float:
    """beta_n(omega) at kappa = 1, guarded by the spectral radius certificate.

    Every node is solved from the cold start 1/omega, so the value does not
    depend on which other nodes were evaluated before it.
    """
    try:
        de = detequiv.solve(profile, omega, tol=solver_tol / max(1.0, omega))
    except ConvergenceError as exc:
        raise ConvergenceError(f"at omega={omega!r}: {exc}", exc.residual, exc.iterations, omega) from None
    A = variance_matrix(de, profile)
    n = profile.n_cols
    p = p_vector(de, profile, 1.0)
    v = (de.t**2 @ profile.sigma_sq) / n / (1.0 + (de.t @ profile.sigma_sq) / n) ** 2
    x = _solve_system(A, np.column_stack([p, v]))
    u = x[:, 1]
    if np.any(u <= 0) or not v.min() / u.max() > 0:
        raise SingularityError(f"spectral radius certificate failed at omega={omega!r}")
    return float(np.mean(x[:, 0]))


def beta_n(profile: VarianceProfile, omega: float, kappa: float, solver_tol: float = 1e-12) -> float:
    """beta_n(omega) = (1/n) sum_l w_l(omega)."""
    if float(kappa) == 0.0:
        return 0.0
    return float(kappa) * _beta_unit(profile, float(omega), solver_tol)


def _thread_count(cfg: QuadratureConfig) -> int:
    if cfg.threads is not None:
        return max(1, int(cfg.threads))
    env = os.environ.get("RMT_CLT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _evaluate(profile: VarianceProfile, omegas: list[float], cfg: QuadratureConfig, cache: dict) -> None:
    todo = sorted(w for w in set(omegas) if w not in cache)
    if not todo:
        return
    if cfg.parallel:
        with ThreadPoolExecutor(max_workers=_thread_count(cfg)) as pool:
            values = list(pool.map(lambda w: _beta_unit(profile, w, cfg.solver_tol), todo))
    else:
        values = [_beta_unit(profile, w, cfg.solver_tol) for w in todo]
    cache.update(zip(todo, values))


def bias_integral(
    profile: VarianceProfile, rho: float, kappa: float, quad: QuadratureConfig | None = None
) -> BiasResult:
    """Integrate beta_n over [rho, omega_max] by adaptive panel Gauss-Legendre.

    beta is computed once at kappa = 1 and scaled, so the returned ``beta`` is
    exactly kappa times the unit-kappa values. kappa = 0 short-circuits to an
    exact zero with no nodes.
    """
    cfg = quad or QuadratureConfig()
    rho = float(rho)
    kappa = float(kappa)
    if not (np.isfinite(rho) and rho > 0):
        raise ValidationError(f"rho must be positive and finite, got {rho!r}")
    if not kappa >= -1:
        raise ValidationError(f"kappa must be >= -1, got {kappa!r}")
    if cfg.order < 1 or cfg.initial_panels < 1:
        raise ValidationError("quadrature order and initial panel count must be positive")
    omega_max = cfg.resolve_omega_max(rho)
    if not omega_max > rho:
        raise ValidationError(f"omega_max={omega_max} must exceed rho={rho}")
    if kappa == 0.0:
        empty = np.zeros(0)
        return BiasResult(rho, kappa, empty, empty, 0.0, 0.0, 0.0, omega_max, 0, cfg)

    x, wts = np.polynomial.legendre.leggauss(cfg.order)

    def nodes(a, b):
        return (0.5 * (b - a) * x + 0.5 * (b + a)).tolist()

    cache: dict[float, float] = {}

    def rule(a, b):
        vals = np.array([cache[w] for w in nodes(a, b)])
        return 0.5 * (b - a) * float(wts @ vals)

    edges = np.geomspace(rho, omega_max, cfg.initial_panels + 1)
    edges[0], edges[-1] = rho, omega_max
    pending = [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]
    accepted: list[tuple[float, float, float]] = []
    total_len = omega_max - rho
    n_panels = len(pending)
    while pending:
        need = []
        for a, b in pending:
            m = 0.5 * (a + b)
            need += nodes(a, b) + nodes(a, m) + nodes(m, b)
        _evaluate(profile, need, cfg, cache)
        nxt = []
        for a, b in pending:
            m = 0.5 * (a + b)
            coarse = rule(a, b)
            fine = rule(a, m) + rule(m, b)
            if abs(fine - coarse) <= cfg.tol * (b - a) / total_len or m in (a, b):
                accepted.append((a, m, rule(a, m)))
                accepted.append((m, b, rule(m, b)))
            else:
                nxt += [(a, m), (m, b)]
                n_panels += 1
        if n_panels > cfg.max_panels:
            raise NumericalError(f"bias quadrature needed more than {cfg.max_panels} panels")
        pending = nxt

    accepted.sort()
    b_unit = math.fsum(q for _, _, q in accepted)
    node_list = sorted({w for a, b, _ in accepted for w in nodes(a, b)})
    omegas = np.array(node_list)
    beta_unit = np.array([cache[w] for w in node_list])
    k_prime = cfg.safety * float(np.max(np.abs(kappa * beta_unit) * omegas**3))
    return BiasResult(
        rho=rho,
        kappa=kappa,
        nodes=omegas,
        beta=kappa * beta_unit,
        b_n=kappa * b_unit,
        tail_bound=k_prime / (2.0 * omega_max**2),
        k_prime=k_prime,
        omega_max=omega_max,
        panels=len(accepted),
        quadrature=cfg,
    )
