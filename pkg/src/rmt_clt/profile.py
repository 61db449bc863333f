"""Variance profiles sigma^2_ij for the N x n matrix Y_ij = sigma_ij / sqrt(n) * X_ij."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from numpy.typing import NDArray

from .errors import ProfileLoadError, ValidationError

__all__ = [
    "ProfileKind",
    "VarianceProfile",
    "make_constant",
    "make_separable",
    "make_sampled",
    "load_profile",
    "save_profile",
    "profile_from_descriptor",
]


class ProfileKind(str, enum.Enum):
    GENERIC = "generic"
    SAMPLED = "sampled"
    SEPARABLE = "separable"


@dataclass(frozen=True, eq=False)
class VarianceProfile:
    """An immutable N x n array of variances with its structural metadata.

    ``sigma2_max`` is the largest entry and ``sigma2_min`` the smallest column
    average ``(1/n) sum_i sigma^2_ij``; construction fails when the latter is
    not positive.
    """

    sigma_sq: NDArray[np.float64]
    kind: ProfileKind = ProfileKind.GENERIC
    function_id: str | None = None
    d: NDArray[np.float64] | None = None
    d_tilde: NDArray[np.float64] | None = None
    sigma2_max: float = field(init=False)
    sigma2_min: float = field(init=False)

    def __post_init__(self) -> None:
        s = np.array(self.sigma_sq, dtype=np.float64, copy=True)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValidationError(f"variance profile must be a non-empty 2-D array, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValidationError("variance profile has non-finite entries")
        if np.any(s < 0):
            i, j = np.argwhere(s < 0)[0]
            raise ValidationError(f"variance profile has a negative entry at ({i}, {j}): {s[i, j]!r}")
        col_avg = s.sum(axis=0) / s.shape[1]
        smin = float(col_avg.min())
        if not smin > 0:
            j = int(np.argmin(col_avg))
            raise ValidationError(f"column {j} of the variance profile has zero average variance")
        s.setflags(write=False)
        object.__setattr__(self, "sigma_sq", s)
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        for name in ("d", "d_tilde"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=np.float64, copy=True)
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        object.__setattr__(self, "sigma2_max", float(s.max()))
        object.__setattr__(self, "sigma2_min", smin)

    @property
    def n_rows(self) -> int:
        return self.sigma_sq.shape[0]

    @property
    def n_cols(self) -> int:
        return self.sigma_sq.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.sigma_sq.shape

    @property
    def c(self) -> float:
        """Aspect ratio N / n."""
        return self.n_rows / self.n_cols

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "n_rows": self.n_rows, "n_cols": self.n_cols,
               "sigma2_max": self.sigma2_max, "sigma2_min": self.sigma2_min}
        if self.function_id is not None:
            out["function"] = self.function_id
        return out


def make_constant(N: int, n: int, s2: float) -> VarianceProfile:
    _check_dims(N, n)
    if not (math.isfinite(s2) and s2 > 0):
        raise ValidationError(f"constant variance must be positive and finite, got {s2!r}")
    return VarianceProfile(np.full((N, n), float(s2)))


def make_separable(d, d_tilde) -> VarianceProfile:
    """Rank-one profile sigma^2_ij = d_i * d_tilde_j with strictly positive factors."""
    d = np.asarray(d, dtype=np.float64)
    dt = np.asarray(d_tilde, dtype=np.float64)
    if d.ndim != 1 or dt.ndim != 1 or d.size == 0 or dt.size == 0:
        raise ValidationError("separable factors must be non-empty vectors")
    if not (np.all(np.isfinite(d)) and np.all(np.isfinite(dt))):
        raise ValidationError("separable factors must be finite")
    if np.any(d <= 0) or np.any(dt <= 0):
        raise ValidationError("separable factors must be strictly positive")
    return VarianceProfile(np.outer(d, dt), ProfileKind.SEPARABLE, d=d, d_tilde=dt)


def make_sampled(f: Callable, N: int, n: int, function_id: str | None = None) -> VarianceProfile:
    """Sample sigma^2_ij = f(i/N, j/n) for i = 1..N, j = 1..n.

    ``f`` is called once on broadcast grids and must be vectorised. If it
    carries separable factors (``d``/``d_tilde`` attributes, as returned by
    :func:`rmt_clt.functions.parse_sigma2`), the profile is tagged separable.
    """
    _check_dims(N, n)
    x = np.arange(1, N + 1, dtype=np.float64)[:, None] / N
    y = np.arange(1, n + 1, dtype=np.float64)[None, :] / n
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=np.float64), (N, n))
    if not np.all(np.isfinite(vals)):
        raise ValidationError("sampled variance function returned non-finite values")
    if np.any(vals < 0):
        raise ValidationError("sampled variance function returned negative values")
    fid = function_id or getattr(f, "name", None)
    d_fn, dt_fn = getattr(f, "d", None), getattr(f, "d_tilde", None)
    if d_fn is not None and dt_fn is not None:
        d = np.asarray(d_fn(x[:, 0]), dtype=np.float64)
        dt = np.asarray(dt_fn(y[0]), dtype=np.float64)
        if np.array_equal(np.outer(d, dt), vals):
            return VarianceProfile(vals, ProfileKind.SEPARABLE, fid, d, dt)
    return VarianceProfile(vals, ProfileKind.SAMPLED, fid)


def _check_dims(N, n) -> None:
    for name, v in (("N", N), ("n", n)):
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
            raise ValidationError(f"{name} must be a positive integer, got {v!r}")


def load_profile(source) -> VarianceProfile:
    """Read a headerless CSV matrix of sigma^2 values (row i = receive index i)."""
    path = Path(source)
    text = path.read_text()
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise ProfileLoadError(f"{path}: empty profile file")
    width = len(rows[0])
    values = []
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ProfileLoadError(f"{path}: ragged row {i}: expected {width} values, found {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise ProfileLoadError(f"{path}: non-numeric cell {bad.strip()!r} in row {i}") from None
    arr = np.array(values, dtype=np.float64)
    try:
        return VarianceProfile(arr)
    except ValidationError as exc:
        raise ProfileLoadError(f"{path}: {exc}") from None


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def save_profile(profile: VarianceProfile, dest) -> None:
    """Write the canonical CSV form; values use 17 significant digits so loading is bit-exact."""
    lines = [",".join(format(v, ".17g") for v in row) for row in profile.sigma_sq.tolist()]
    Path(dest).write_text("\n".join(lines) + "\n")


_DESCRIPTOR_FIELDS = {
    "constant": {"kind", "n_rows", "n_cols", "s2"},
    "separable": {"kind", "d", "d_tilde"},
    "file": {"kind", "path"},
    "sampled": {"kind", "function", "n_rows", "n_cols"},
}


def profile_from_descriptor(desc: Mapping, base_dir=None) -> VarianceProfile:
    """Build a profile from a JSON descriptor such as ``{"kind": "constant", ...}``.

    Relative ``path`` entries are resolved against ``base_dir``.
    """
    if not isinstance(desc, Mapping):
        raise ValidationError("profile descriptor must be a JSON object")
    kind = desc.get("kind")
    if kind not in _DESCRIPTOR_FIELDS:
        raise ValidationError(f"unknown profile kind {kind!r}; expected one of {sorted(_DESCRIPTOR_FIELDS)}")
    allowed = _DESCRIPTOR_FIELDS[kind]
    unknown = set(desc) - allowed
    missing = allowed - set(desc)
    if unknown:
        raise ValidationError(f"unknown fields in {kind} profile descriptor: {sorted(unknown)}")
    if missing:
        raise ValidationError(f"missing fields in {kind} profile descriptor: {sorted(missing)}")
    if kind == "constant":
        return make_constant(desc["n_rows"], desc["n_cols"], float(desc["s2"]))
    if kind == "separable":
        return make_separable(desc["d"], desc["d_tilde"])
    if kind == "sampled":
        from .functions import parse_sigma2

        return make_sampled(parse_sigma2(desc["function"]), desc["n_rows"], desc["n_cols"])
    path = Path(desc["path"])
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_profile(path)
