import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from mkvcub.model import builtin_problem, symbolic_problem
from mkvcub.reference import McConfig, _normals, closed_form_example1, euler_mc, ito_drift, norm_cdf


def _quadrature(x, T):
    # E (m + sqrt(T) Z)^+ integrated over the region where the integrand is positive
    m, s = x * math.exp(T), math.sqrt(T)
    lo = max(-m / s, -40.0)
    if lo >= 40.0:
        return 0.0
    val, _ = integrate.quad(lambda z: (m + s * z) * stats.norm.pdf(z), lo, 40.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def test_closed_form_against_quadrature_long_horizon():
    assert closed_form_example1(0.5, 10.0) == pytest.approx(_quadrature(0.5, 10.0), rel=1e-10)


def test_closed_form_against_gauss_hermite():
    # kink far in the tail: the integrand is linear on every node, so Gauss-Hermite is exact
    z, w = np.polynomial.hermite_e.hermegauss(80)
    m, s = 0.5 * math.exp(10.0), math.sqrt(10.0)
    gh = float(np.sum(w * np.maximum(m + s * z, 0.0)) / math.sqrt(2 * math.pi))
    assert closed_form_example1(0.5, 10.0) == pytest.approx(gh, rel=1e-10)


@given(st.floats(-2, 2), st.floats(0.05, 5))
def test_closed_form_against_quadrature(x, T):
    assert closed_form_example1(x, T) == pytest.approx(_quadrature(x, T), rel=1e-9, abs=1e-12)


def test_closed_form_edges():
    assert closed_form_example1(0.0, 2.0) == pytest.approx(math.sqrt(2.0 / (2 * math.pi)), rel=1e-15)
    assert closed_form_example1(5.0, 3.0) == pytest.approx(5 * math.exp(3.0), rel=1e-12)
    with pytest.raises(ValueError):
        closed_form_example1(0.5, 0.0)


@given(st.floats(-8, 8))
def test_normal_cdf_accuracy(x):
    assert norm_cdf(x) == pytest.approx(stats.norm.cdf(x), abs=1e-15, rel=1e-13)


def test_seed_determinism_and_antithetic_agreement():
    p = builtin_problem("example1").with_overrides(horizon=1.0)
    a = euler_mc(p, McConfig(20000, 50, 11))
    assert a == euler_mc(p, McConfig(20000, 50, 11))
    assert a != euler_mc(p, McConfig(20000, 50, 12))
    b = euler_mc(p, McConfig(20000, 50, 11, antithetic=True))
    assert abs(a[0] - b[0]) < 3 * math.hypot(a[1], b[1])


def test_prefix_property_of_streams():
    cfg = McConfig(10, 1, 5)
    np.testing.assert_array_equal(_normals(cfg, 3, 100, 2)[:40], _normals(cfg, 3, 40, 2))
    assert not np.array_equal(_normals(cfg, 3, 10, 2), _normals(cfg, 4, 10, 2))


def test_stderr_scaling():
    p = builtin_problem("example1").with_overrides(horizon=1.0)
    se = [euler_mc(p, McConfig(n, 10, 3))[1] for n in (10**4, 10**5, 10**6)]
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(math.sqrt(10), rel=0.2)


def _gbm():
    z, y = sp.symbols("z y")
    return symbolic_problem("gbm", (z,), y, [[0], [z]], [0, 0], lambda s: s[:, 0], [1.0], 1.0)


def test_stratonovich_correction_drift():
    p = _gbm()
    z = np.array([[2.0], [-1.0]])
    np.testing.assert_allclose(ito_drift(p, z, [0.0, 0.0]), 0.5 * z)


def test_stratonovich_gbm_mean():
    # X = exp(W_T) in Stratonovich form, so E X_1 = e^{1/2}
    est, se = euler_mc(_gbm(), McConfig(200_000, 200, 1))
    assert abs(est - math.exp(0.5)) < 3 * se + 0.01


def test_zero_diffusion_is_deterministic():
    z, y = sp.symbols("z y")
    p = symbolic_problem("drift", (z,), y, [[y], [0]], [z, 0], lambda s: s[:, 0], [0.5], 1.0)
    est, se = euler_mc(p, McConfig(100, 1000, 0))
    assert se == 0.0
    assert est == pytest.approx(0.5 * math.e, rel=2e-3)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(1, 10)
    with pytest.raises(ValueError):
        McConfig(10, 0)
    with pytest.raises(ValueError):
        McConfig(11, 10, antithetic=True)
    with pytest.raises(ValueError):
        McConfig(10, 10, seed=-1)


def test_non_finite_particles_raise():
    z, y = sp.symbols("z y")
    p = symbolic_problem("blow", (z,), y, [[z**3], [0]], [0, 0], lambda s: s[:, 0], [5.0], 1.0)
    with pytest.raises(FloatingPointError), np.errstate(over="ignore", invalid="ignore"):
        euler_mc(p, McConfig(4, 10, 0))
