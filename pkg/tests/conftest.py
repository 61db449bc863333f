import math

import numpy as np
import pytest

from rmt_clt.profile import VarianceProfile

# Positive root of t^2 + t - 1 = 0: every t_i for sigma^2 = 1, N = n, rho = 1.
GOLDEN_T = (math.sqrt(5.0) - 1.0) / 2.0

ACCEPTANCE_LINES: list[str] = []


def golden_t(omega: float) -> float:
    """Positive root of omega t^2 + omega t - 1 = 0 (constant unit profile, N = n, shift omega)."""
    return (-omega + math.sqrt(omega * omega + 4.0 * omega)) / (2.0 * omega)


def random_profiles(count, seed, lo=8, hi=128, smax=4.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        N, n = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        s = smax * (1.0 - rng.random((N, n)))  # values in (0, smax]
        out.append(VarianceProfile(s))
    return out


def eig_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@pytest.fixture
def twobytwo():
    return VarianceProfile(np.array([[1.0, 2.0], [2.0, 1.0]]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
