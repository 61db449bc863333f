"""Named variance functions on the unit square.

Names accepted by :func:`parse_sigma2`::

    constant:S2            sigma^2(x, y) = S2
    separable:D,DT         sigma^2(x, y) = d(x) * dt(y); D and DT are polynomial
                           coefficient lists in increasing degree, separated by
                           ';' (so "1;1" is 1 + x)
    product[:EPS]          sigma^2(x, y) = x * y + EPS          (EPS defaults to 0.1)
    exp-decay[:OFFSET]     sigma^2(x, y) = exp(-|x - y|) + OFFSET (OFFSET defaults to 0.1)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

__all__ = ["Sigma2Function", "parse_sigma2", "polynomial"]

Univariate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Sigma2Function:
    """A vectorised sigma^2(x, y), optionally carrying its separable factors."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d: Univariate | None = None
    d_tilde: Univariate | None = None

    def __call__(self, x, y):
        return self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @property
    def is_separable(self) -> bool:
        return self.d is not None and self.d_tilde is not None


def polynomial(coeffs) -> Univariate:
    """Return x -> sum_k coeffs[k] x^k, vectorised."""
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValidationError("polynomial needs at least one coefficient")

    def p(x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), c)

    return p


def separable(d: Univariate, d_tilde: Univariate, name: str = "separable") -> Sigma2Function:
    return Sigma2Function(name, lambda x, y: d(x) * d_tilde(y), d, d_tilde)


def _parse_coeffs(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(";")]
    except ValueError as exc:
        raise ValidationError(f"bad polynomial coefficients {text!r}") from exc


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ValidationError(f"bad {what} {text!r}") from exc


def parse_sigma2(name: str) -> Sigma2Function:
    """Build a named variance function; raises ValidationError on unknown names."""
    head, _, arg = name.partition(":")
    head = head.strip().lower()
    if head == "constant":
        s2 = _parse_float(arg or "1", "constant")
        if not np.isfinite(s2) or s2 <= 0:
            raise ValidationError("constant variance must be positive")
        return Sigma2Function(name, lambda x, y: np.full(np.broadcast(x, y).shape, s2),
                              lambda x: np.full(np.shape(x), s2), lambda y: np.ones(np.shape(y)))
    if head == "separable":
        parts = arg.split(",")
        if len(parts) != 2:
            raise ValidationError("separable needs two coefficient lists: 'separable:D,DT'")
        d = polynomial(_parse_coeffs(parts[0]))
        dt = polynomial(_parse_coeffs(parts[1]))
        grid = np.linspace(0.0, 1.0, 1025)
        if np.any(d(grid) <= 0) or np.any(dt(grid) <= 0):
            raise ValidationError(f"{name!r}: separable factors must be positive on [0, 1]")
        return separable(d, dt, name)
    if head == "product":
        eps = _parse_float(arg, "product offset") if arg else 0.1
        if eps <= 0:
            raise ValidationError("product offset must be positive")
        return Sigma2Function(name, lambda x, y: x * y + eps)
    if head == "exp-decay":
        off = _parse_float(arg, "exp-decay offset") if arg else 0.1
        if off < 0:
            raise ValidationError("exp-decay offset must be non-negative")
        return Sigma2Function(name, lambda x, y: np.exp(-np.abs(x - y)) + off)
    raise ValidationError(f"unknown variance function {name!r}")
