"""Monte Carlo sampling of Y and the statistic I_n(rho) = (1/N) log det(YY* + rho I).

Every trial draws from its own Philox stream keyed by (seed, trial_index), so
per-trial values do not depend on trial order, chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, stats

from . import bias, detequiv, fluctuation
from .errors import NumericalError, ValidationError
from .fluctuation import EntryDistribution, kappa_of
from .profile import VarianceProfile

__all__ = [
    "ExperimentConfig",
    "CltDiagnostics",
    "trial_rng",
    "sample_matrix",
    "log_det_shifted",
    "empirical_stieltjes",
    "trial_statistics",
    "reference_values",
    "diagnostics_from_samples",
    "run_experiment",
]

_CHUNK = 256


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    profile: VarianceProfile
    rho: float
    dist: EntryDistribution
    trials: int
    seed: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ValidationError(f"rho must be positive, got {self.rho!r}")
        if isinstance(self.trials, bool) or not isinstance(self.trials, (int, np.integer)) or self.trials < 2:
            raise ValidationError(f"trials must be an integer >= 2, got {self.trials!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class CltDiagnostics:
    trials: int
    n_rows: int
    mean_I: float
    var_scaled: float
    theta_sq_ref: float
    v_n_ref: float
    b_n_ref: float
    bias_scaled: float
    bias_stderr: float
    standardized_samples: NDArray[np.float64]
    ks_stat: float
    skewness: float
    excess_kurtosis: float

    @property
    def variance_ratio(self) -> float:
        return self.var_scaled / self.theta_sq_ref

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "n_rows": self.n_rows,
            "mean_I": self.mean_I,
            "var_scaled": self.var_scaled,
            "theta_sq_ref": self.theta_sq_ref,
            "variance_ratio": self.variance_ratio,
            "v_n_ref": self.v_n_ref,
            "b_n_ref": self.b_n_ref,
            "bias_scaled": self.bias_scaled,
            "bias_stderr": self.bias_stderr,
            "ks_stat": self.ks_stat,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
        }


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Counter-based generator for one trial: Philox keyed by (seed, trial_index)."""
    return np.random.Generator(np.random.Philox(key=int(seed) | (int(trial_index) << 64)))


def sample_matrix(cfg: ExperimentConfig, trial_index: int) -> NDArray[np.complex128]:
    """Y_ij = sigma_ij / sqrt(n) X_ij for one trial."""
    p = cfg.profile
    X = cfg.dist.sample(trial_rng(cfg.seed, trial_index), p.shape)
    return np.sqrt(p.sigma_sq / p.n_cols) * X


def _cholesky_gram(Y: NDArray[np.complex128], rho: float) -> NDArray[np.complex128]:
    N = Y.shape[-2]
    G = Y @ np.conj(np.swapaxes(Y, -1, -2))
    G = G + rho * np.eye(N)
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of YY* + rho I failed: {exc}") from None


def log_det_shifted(Y: NDArray[np.complex128], rho: float) -> float | NDArray[np.float64]:
    """log det(YY* + rho I) = sum_i log(lambda_i + rho), not divided by N.

    Accepts a stack of matrices (..., N, n) and returns one value per matrix.
    """
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho!r}")
    Y = np.asarray(Y, dtype=np.complex128)
    L = _cholesky_gram(Y, float(rho))
    diag = np.diagonal(L, axis1=-2, axis2=-1).real
    out = 2.0 * np.sum(np.log(diag), axis=-1)
    return float(out) if out.ndim == 0 else out


def empirical_stieltjes(Y: NDArray[np.complex128], rho: float) -> float:
    """(1/N) Tr (YY* + rho I)^-1."""
    if not rho > 0:
        raise ValidationError(f"rho must be positive, got {rho!r}")
    Y = np.asarray(Y, dtype=np.complex128)
    L = _cholesky_gram(Y, float(rho))
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return float(np.sum(np.abs(Linv) ** 2) / L.shape[0])


def _chunk_log_dets(cfg: ExperimentConfig, indices: NDArray[np.int64]) -> NDArray[np.float64]:
    Ys = np.stack([sample_matrix(cfg, int(k)) for k in indices])
    return np.asarray(log_det_shifted(Ys, cfg.rho)).reshape(len(indices))


def _threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("RMT_CLT_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def trial_statistics(
    cfg: ExperimentConfig, indices=None, threads: int | None = None
) -> NDArray[np.float64]:
    """I_k = (1/N) log det(Y_k Y_k* + rho I) for the given trial indices (default: all)."""
    idx = np.arange(cfg.trials) if indices is None else np.asarray(indices, dtype=np.int64)
    chunks = [idx[i:i + _CHUNK] for i in range(0, idx.size, _CHUNK)]
    workers = min(_threads(threads), max(1, len(chunks)))
    if workers == 1:
        parts = [_chunk_log_dets(cfg, ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ch: _chunk_log_dets(cfg, ch), chunks))
    out = np.concatenate(parts) if parts else np.zeros(0)
    return out / cfg.profile.n_rows


def reference_values(
    profile: VarianceProfile, rho: float, kappa: float, quad: bias.QuadratureConfig | None = None
) -> dict:
    """theta_sq, v_n and b_n from the deterministic side, for comparison with simulation."""
    de = detequiv.solve(profile, rho)
    report = fluctuation.fluctuation_report(de, profile, kappa)
    b = bias.bias_integral(profile, rho, kappa, quad)
    return {
        "theta_sq": report.theta_sq,
        "v_n": detequiv.v_n(de, profile),
        "b_n": b.b_n,
        "kappa": float(kappa),
    }


def _moments(z: NDArray[np.float64]) -> tuple[float, float]:
    m2 = float(np.mean(z**2))
    if m2 == 0:
        return math.nan, math.nan
    return float(np.mean(z**3)) / m2**1.5, float(np.mean(z**4)) / m2**2 - 3.0


def diagnostics_from_samples(values: NDArray[np.float64], n_rows: int, refs: Mapping) -> CltDiagnostics:
    """Summarize per-trial I_k against reference theta_sq, v_n, b_n.

    The reduction only depends on the values in trial-index order, so it is
    reproducible from a stored per-trial file.
    """
    I = np.asarray(values, dtype=np.float64)
    if I.size < 2:
        raise ValidationError("need at least two trials")
    theta_sq = float(refs["theta_sq"])
    mean = float(np.mean(I))
    scaled = n_rows * (I - mean)
    var_scaled = float(np.sum(scaled**2) / (I.size - 1))
    z = scaled / math.sqrt(theta_sq)
    ks = float(stats.kstest(z, "norm").statistic)
    skew, kurt = _moments(scaled)
    return CltDiagnostics(
        trials=int(I.size),
        n_rows=int(n_rows),
        mean_I=mean,
        var_scaled=var_scaled,
        theta_sq_ref=theta_sq,
        v_n_ref=float(refs["v_n"]),
        b_n_ref=float(refs["b_n"]),
        bias_scaled=n_rows * (mean - float(refs["v_n"])),
        bias_stderr=math.sqrt(var_scaled / I.size),
        standardized_samples=z,
        ks_stat=ks,
        skewness=skew,
        excess_kurtosis=kurt,
    )


def run_experiment(cfg: ExperimentConfig, refs: Mapping | None = None, threads: int | None = None) -> CltDiagnostics:
    """Simulate all trials and compare with the references (computed here when not given)."""
    if refs is None:
        refs = reference_values(cfg.profile, cfg.rho, kappa_of(cfg.dist))
    values = trial_statistics(cfg, threads=threads)
    return diagnostics_from_samples(values, cfg.profile.n_rows, refs)
