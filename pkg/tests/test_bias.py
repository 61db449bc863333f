import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import golden_t, random_profiles
from rmt_clt.bias import QuadratureConfig, beta_n, bias_integral, p_vector, solve_w
from rmt_clt.detequiv import solve
from rmt_clt.errors import ValidationError
from rmt_clt.fluctuation import variance_matrix
from rmt_clt.profile import VarianceProfile, make_constant, make_sampled
from rmt_clt.functions import parse_sigma2


def p_vector_loops(de, p, kappa):
    """p_l written with the diagonal-matrix traces spelled out."""
    s, t, tt, w = p.sigma_sq, de.t, de.t_tilde, de.rho
    N, n = p.shape
    out = np.zeros(n)
    for l in range(n):
        first = 0.0
        for i in range(N):
            tr_row = sum(s[i, j] ** 2 * tt[j] ** 2 for j in range(n)) / n  # (1/n) Tr D~_i^2 T~^2
            first += s[i, l] * t[i] ** 3 * tr_row
        first *= w / n
        second = tt[l] / n * sum(s[i, l] ** 2 * t[i] ** 2 for i in range(N))
        out[l] = kappa * w**2 * tt[l] ** 2 * (first - second)
    return out


def beta_constant(omega, kappa):
    """Unit constant profile with N = n: A = (w^2 t^4) 11*/n and p = -kappa w^3 t^6."""
    t = golden_t(omega)
    return -kappa * omega**3 * t**6 / (1.0 - omega**2 * t**4)


@pytest.mark.parametrize("p", random_profiles(3, seed=31, hi=15) + [make_constant(4, 6, 0.8)])
@pytest.mark.parametrize("omega", [0.3, 2.0])
def test_p_vector_matches_loops(p, omega):
    de = solve(p, omega)
    np.testing.assert_allclose(p_vector(de, p, -1.0), p_vector_loops(de, p, -1.0), rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("omega", [0.5, 1.0, 7.0])
def test_constant_profile_p_and_beta(omega):
    p = make_constant(16, 16, 1.0)
    de = solve(p, omega)
    t = golden_t(omega)
    np.testing.assert_allclose(p_vector(de, p, -1.0), omega**3 * t**6, rtol=1e-11)
    # bracket before the kappa w^2 t~^2 prefactor is w t^5 - t^3
    np.testing.assert_allclose(p_vector(de, p, 1.0) / (omega**2 * t**2), omega * t**5 - t**3, rtol=1e-10)
    assert beta_n(p, omega, -1.0) == pytest.approx(beta_constant(omega, -1.0), rel=1e-11)


def test_constant_profile_integral_against_scipy():
    p = make_constant(8, 8, 1.0)
    res = bias_integral(p, 1.0, -1.0)
    ref, err = quad(beta_constant, 1.0, res.omega_max, args=(-1.0,), epsabs=1e-13, epsrel=1e-13, limit=200)
    assert res.b_n == pytest.approx(ref, abs=1e-9)
    full, _ = quad(beta_constant, 1.0, np.inf, args=(-1.0,), epsabs=1e-13, limit=200)
    assert abs(full - res.b_n) <= res.tail_bound
    assert full == pytest.approx(0.0729490, abs=5e-7)


def test_beta_decays_like_inverse_cube():
    p = random_profiles(1, seed=32, hi=20)[0]
    w = 50.0 * 2.0 ** np.arange(6)
    scaled = np.array([beta_n(p, x, -1.0) for x in w]) * w**3
    # w^3 beta(w) = K + O(1/w): successive gaps roughly halve as w doubles
    ratios = np.abs(np.diff(scaled))[1:] / np.abs(np.diff(scaled))[:-1]
    assert np.all(np.diff(ratios) < 0)
    assert 0.5 < ratios[-1] < 0.55


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.floats(0.1, 10), st.floats(-1, 4), st.integers(0, 2**32 - 1))
def test_p_and_w_linear_in_kappa(N, n, omega, kappa, seed):
    p = VarianceProfile(np.random.default_rng(seed).random((N, n)) + 0.1)
    de = solve(p, omega)
    A = variance_matrix(de, p)
    p1, pk = p_vector(de, p, 1.0), p_vector(de, p, kappa)
    np.testing.assert_allclose(pk, kappa * p1, rtol=1e-14, atol=1e-300)
    w1, wk = solve_w(A, p1), solve_w(A, pk)
    np.testing.assert_allclose(np.mean(wk), kappa * np.mean(w1), rtol=1e-12, atol=1e-300)


def test_bias_integral_linear_in_kappa():
    p = random_profiles(1, seed=33, hi=20)[0]
    cfg = QuadratureConfig(omega_max=50.0)
    r1 = bias_integral(p, 1.0, 1.0, cfg)
    rq = bias_integral(p, 1.0, -1.0, cfg)
    ru = bias_integral(p, 1.0, -2.0 / 3.0, cfg)
    assert rq.b_n == -r1.b_n
    assert ru.b_n == pytest.approx(-2.0 / 3.0 * r1.b_n, rel=1e-15)
    np.testing.assert_array_equal(rq.nodes, r1.nodes)


def test_kappa_zero_is_exact_zero():
    res = bias_integral(make_constant(3, 3, 1.0), 1.0, 0.0)
    assert res.b_n == 0.0 and res.tail_bound == 0.0 and res.nodes.size == 0
    assert beta_n(make_constant(3, 3, 1.0), 2.0, 0.0) == 0.0


def test_doubling_order_changes_little():
    p = make_sampled(parse_sigma2("exp-decay"), 24, 16)
    a = bias_integral(p, 0.5, -1.0, QuadratureConfig(order=10))
    b = bias_integral(p, 0.5, -1.0, QuadratureConfig(order=20))
    assert b.nodes.size > a.nodes.size
    assert a.b_n == pytest.approx(b.b_n, abs=1e-9)


def test_doubling_omega_max_keeps_k_prime():
    p = random_profiles(1, seed=34, hi=24)[0]
    a = bias_integral(p, 1.0, -1.0, QuadratureConfig(omega_max=100.0))
    b = bias_integral(p, 1.0, -1.0, QuadratureConfig(omega_max=200.0))
    assert abs(b.k_prime / a.k_prime - 1) <= 0.2
    assert abs(b.b_n - a.b_n) <= a.tail_bound
    assert b.tail_bound < a.tail_bound


def test_parallel_matches_serial():
    p = random_profiles(1, seed=35, hi=24)[0]
    s = bias_integral(p, 0.7, -1.0, QuadratureConfig(parallel=False))
    q = bias_integral(p, 0.7, -1.0, QuadratureConfig(parallel=True, threads=4))
    assert s.nodes.tobytes() == q.nodes.tobytes()
    assert s.beta.tobytes() == q.beta.tobytes()
    assert s.b_n == q.b_n


def test_large_rho_bias_vanishes():
    res = bias_integral(make_constant(4, 4, 1.0), 1e6, -1.0)
    assert abs(res.b_n) < 1e-10


@pytest.mark.parametrize(
    "rho, kappa, cfg",
    [
        (0.0, -1.0, None),
        (1.0, -1.5, None),
        (1.0, -1.0, QuadratureConfig(omega_max=0.5)),
        (1.0, -1.0, QuadratureConfig(order=0)),
    ],
)
def test_bias_integral_validation(rho, kappa, cfg):
    with pytest.raises(ValidationError):
        bias_integral(make_constant(2, 2, 1.0), rho, kappa, cfg)


def test_solve_w_shape_and_zero():
    with pytest.raises(ValidationError):
        solve_w(np.zeros((2, 2)), np.ones(3))
    np.testing.assert_array_equal(solve_w(np.eye(2) * 0.5, np.zeros(2)), np.zeros(2))


def test_result_dict():
    d = bias_integral(make_constant(3, 3, 1.0), 1.0, -1.0, QuadratureConfig(omega_max=20.0)).to_dict()
    assert set(d) == {"rho", "kappa", "b_n", "tail_bound", "k_prime", "omega_max", "panels", "n_nodes"}
