"""Variance matrix A_n and the CLT variance Theta^2_n = -log det(I - A_n) + kappa Tr A_n."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .detequiv import DeterministicEquivalent, _check_match
from .errors import DegenerateVarianceError, SingularityError, ValidationError
from .profile import VarianceProfile

__all__ = [
    "DistributionKind",
    "EntryDistribution",
    "FluctuationReport",
    "variance_matrix",
    "theta_sq",
    "spectral_radius_certificate",
    "radius_bound",
    "kappa_of",
    "fluctuation_report",
    "log_det_i_minus",
]

Sampler = Callable[[np.random.Generator, tuple], NDArray[np.complex128]]


class DistributionKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    QPSK = "qpsk"
    UNIFORM_DISK = "uniform-disk"
    CUSTOM = "custom"


_BUILTIN_KAPPA = {
    DistributionKind.GAUSSIAN: 0.0,
    DistributionKind.QPSK: -1.0,
    # |X|^2 ~ U(0, 2) for the unit-variance disk, so E|X|^4 = 4/3
    DistributionKind.UNIFORM_DISK: -2.0 / 3.0,
}


@dataclass(frozen=True)
class EntryDistribution:
    """Law of the standardized entries X_ij (E X = E X^2 = 0, E|X|^2 = 1).

    ``kappa`` is the fourth cumulant E|X|^4 - 2. Custom laws supply a sampler
    ``sampler(rng, shape) -> complex array`` and must declare ``kappa``; their
    finite eighth moment is assumed, not checked.
    """

    kind: DistributionKind
    kappa: float | None = None
    sampler: Sampler | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        kind = DistributionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is DistributionKind.CUSTOM:
            if self.sampler is None:
                raise ValidationError("custom distribution needs a sampler")
        else:
            if self.kappa is not None and self.kappa != _BUILTIN_KAPPA[kind]:
                raise ValidationError(f"{kind.value} has kappa {_BUILTIN_KAPPA[kind]}, not {self.kappa}")
            object.__setattr__(self, "kappa", _BUILTIN_KAPPA[kind])
        if self.kappa is not None and not self.kappa >= -1:
            raise ValidationError(f"kappa must be >= -1, got {self.kappa!r}")

    @classmethod
    def gaussian(cls) -> "EntryDistribution":
        return cls(DistributionKind.GAUSSIAN)

    @classmethod
    def qpsk(cls) -> "EntryDistribution":
        return cls(DistributionKind.QPSK)

    @classmethod
    def uniform_disk(cls) -> "EntryDistribution":
        return cls(DistributionKind.UNIFORM_DISK)

    @classmethod
    def custom(cls, sampler: Sampler, kappa: float | None, name: str = "custom") -> "EntryDistribution":
        return cls(DistributionKind.CUSTOM, kappa, sampler, name)

    @classmethod
    def from_name(cls, name: str) -> "EntryDistribution":
        try:
            kind = DistributionKind(name)
        except ValueError:
            raise ValidationError(
                f"unknown distribution {name!r}; expected gaussian, qpsk or uniform-disk"
            ) from None
        if kind is DistributionKind.CUSTOM:
            raise ValidationError("custom distributions are only available through the Python API")
        return cls(kind)

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def sample(self, rng: np.random.Generator, shape: tuple) -> NDArray[np.complex128]:
        kind = self.kind
        if kind is DistributionKind.GAUSSIAN:
            z = rng.standard_normal(shape + (2,))
            return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)
        if kind is DistributionKind.QPSK:
            bits = rng.integers(0, 2, size=shape + (2,))
            return ((2 * bits[..., 0] - 1) + 1j * (2 * bits[..., 1] - 1)) * math.sqrt(0.5)
        if kind is DistributionKind.UNIFORM_DISK:
            u = rng.random(shape + (2,))
            return np.sqrt(2.0 * u[..., 0]) * np.exp(2j * np.pi * u[..., 1])
        return np.asarray(self.sampler(rng, shape), dtype=np.complex128)


def kappa_of(dist: EntryDistribution) -> float:
    if dist.kappa is None:
        raise ValidationError(f"distribution {dist.label!r} has no declared kappa")
    return float(dist.kappa)


@dataclass(frozen=True)
class FluctuationReport:
    theta_sq: float
    v_term: float
    w_term: float
    spectral_radius_bound: float
    kappa_used: float

    def to_dict(self) -> dict:
        return {
            "theta_sq": self.theta_sq,
            "v_term": self.v_term,
            "w_term": self.w_term,
            "spectral_radius_bound": self.spectral_radius_bound,
            "kappa": self.kappa_used,
        }


def _column_terms(de: DeterministicEquivalent, profile: VarianceProfile):
    s = profile.sigma_sq
    n = profile.n_cols
    denom = (1.0 + (de.t @ s) / n) ** 2
    return s, n, denom


def variance_matrix(de: DeterministicEquivalent, profile: VarianceProfile) -> NDArray[np.float64]:
    """a_lm = (1/n) [(1/n) Tr D_l D_m T^2] / (1 + (1/n) Tr D_l T)^2, an n x n nonnegative matrix."""
    _check_match(de, profile)
    s, n, denom = _column_terms(de, profile)
    gram = (s.T * de.t**2) @ s
    return gram / (n * n * denom[:, None])


def log_det_i_minus(A: NDArray[np.float64]) -> float:
    """log det(I - A) through an LU factorization; raises if the determinant is not positive."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(np.eye(A.shape[0]) - A)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularityError("I - A is singular or has a non-positive determinant")
    return float(logdet)


def radius_bound(A: NDArray[np.float64], v: NDArray[np.float64]) -> float:
    """Return 1 - min(v)/max(u) where (I - A) u = v, for nonnegative A and positive v.

    A positive solution u certifies r(A) <= the returned value < 1.
    """
    A = np.asarray(A, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise SingularityError("certificate vector v must be positive")
    try:
        u = np.linalg.solve(np.eye(A.shape[0]) - A, v)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"I - A is singular: {exc}") from None
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise SingularityError("spectral radius certificate failed: (I - A)^-1 v is not positive")
    return float(1.0 - v.min() / u.max())


def spectral_radius_certificate(
    A: NDArray[np.float64], de: DeterministicEquivalent, profile: VarianceProfile
) -> float:
    """Upper bound on r(A) from u = A u + v with v_l = [(1/n) Tr D_l T^2] / (1 + (1/n) Tr D_l T)^2."""
    _check_match(de, profile)
    s, n, denom = _column_terms(de, profile)
    v = (de.t**2 @ s) / n / denom
    return radius_bound(A, v)


def theta_sq(
    A: NDArray[np.float64], kappa: float, spectral_radius_bound: float | None = None
) -> FluctuationReport:
    """Theta^2 = -log det(I - A) + kappa Tr A.

    Without a precomputed bound the guard solves (I - A) u = 1 and uses the
    same min/max ratio with v = 1.
    """
    kappa = float(kappa)
    if not kappa >= -1:
        raise ValidationError(f"kappa must be >= -1, got {kappa!r}")
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("variance matrix must be square")
    if spectral_radius_bound is None:
        spectral_radius_bound = radius_bound(A, np.ones(A.shape[0]))
    if not spectral_radius_bound < 1:
        raise SingularityError(f"spectral radius bound {spectral_radius_bound} is not below 1")
    v_term = -log_det_i_minus(A)
    w_term = float(np.trace(A))
    report = FluctuationReport(v_term + kappa * w_term, v_term, w_term, float(spectral_radius_bound), kappa)
    if not report.theta_sq > 0:
        raise DegenerateVarianceError(f"degenerate CLT variance theta^2 = {report.theta_sq!r}", report)
    return report


def fluctuation_report(de: DeterministicEquivalent, profile: VarianceProfile, kappa: float) -> FluctuationReport:
    A = variance_matrix(de, profile)
    return theta_sq(A, kappa, spectral_radius_certificate(A, de, profile))
