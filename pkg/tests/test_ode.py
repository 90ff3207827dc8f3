import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from mkvcub.cubature import PiecewiseLinearPath, builtin_formula, rescale
from mkvcub.model import builtin_problem, symbolic_problem
from mkvcub.ode import OdeConfig, OdeError, ScalarPolynomial, integrate_piece, rk4_fixed, solve_segment


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_polynomial_against_numpy(coeffs, t0, a, b):
    p = ScalarPolynomial(coeffs, t0)
    ref = np.polynomial.Polynomial(coeffs)
    assert p(a) == pytest.approx(ref(a - t0), rel=1e-12, abs=1e-12)
    anti = ref.integ()
    assert p.integral(a, b) == pytest.approx(anti(b - t0) - anti(a - t0), rel=1e-10, abs=1e-10)


def test_polynomial_rejects_nan():
    with pytest.raises(ValueError):
        ScalarPolynomial([1.0, float("nan")])


def _gbm():
    z, y = sp.symbols("z y")
    return symbolic_problem("gbm", (z,), y, [[0], [z]], [0, 0], lambda s: s[:, 0], [1.0], 1.0)


@given(st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=4))
def test_linear_field_exact_solution(incs):
    # dX = X d omega along any path gives X = x exp(omega)
    k = len(incs)
    bps = np.linspace(0, 1, k + 1)
    vals = np.column_stack([bps, np.concatenate([[0.0], np.cumsum(incs)])])[:, 1:]
    path = rescale(PiecewiseLinearPath(bps, vals), 0.0, 1.0)
    x = solve_segment(_gbm(), [[1.0], [2.0]], path, [ScalarPolynomial([0.0])] * 2)
    np.testing.assert_allclose(x[:, 0], np.array([1.0, 2.0]) * math.exp(sum(incs)), rtol=1e-8, atol=1e-9)


def test_example1_straight_path_exact():
    # dX = E(t) dt + d omega with E(t) = c0 + c1 (t - t0): X = x + int E + omega
    p = builtin_problem("example1")
    path = rescale(builtin_formula(3, 1).paths[0], 0.2, 0.6)
    e = ScalarPolynomial([0.7, 0.3, -0.1], 0.2)
    x = solve_segment(p, [[0.5]], path, [e, ScalarPolynomial([0.0])])
    assert x[0, 0] == pytest.approx(0.5 + e.integral(0.2, 0.6) + math.sqrt(0.4) * path_increment(path), rel=1e-12)


def path_increment(path):
    return float(np.sum(path.increments()[:, 1])) / math.sqrt(0.4)


def test_adaptive_agrees_with_fixed_rk4():
    p = builtin_problem("example2")
    polys = [ScalarPolynomial([0.0]), ScalarPolynomial([0.4, 0.2, 0.1], 0.1), ScalarPolynomial([0.0])]
    x0 = np.array([[1.0, 0.5], [-0.3, 2.0]])
    for path in builtin_formula(5, 2).paths[:3]:
        r = rescale(path, 0.1, 0.35)
        a = solve_segment(p, x0, r, polys)
        b = rk4_fixed(p, x0, r, polys, substeps=1000)
        np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-9)


def test_rows_are_independent_bitwise():
    p = builtin_problem("example2")
    polys = [ScalarPolynomial([0.0]), ScalarPolynomial([0.4, 0.2], 0.0), ScalarPolynomial([0.0])]
    r = rescale(builtin_formula(5, 2).paths[7], 0.0, 0.5)
    x0 = np.random.default_rng(3).normal(size=(9, 2))
    together = solve_segment(p, x0, r, polys)
    apart = np.vstack([solve_segment(p, x0[i : i + 1], r, polys) for i in range(9)])
    assert np.array_equal(together, apart)


def test_blow_up_raises():
    z, y = sp.symbols("z y")
    p = symbolic_problem("blow", (z,), y, [[0], [z**2]], [0, 0], lambda s: s[:, 0], [10.0], 1.0)
    r = rescale(builtin_formula(3, 1).paths[0], 0.0, 1.0)
    with pytest.raises(OdeError):
        solve_segment(p, [[10.0]], r, [ScalarPolynomial([0.0])] * 2, OdeConfig(max_substeps=500))


def test_integrate_piece_counts_steps():
    stats = {}
    out = integrate_piece(lambda t, x: -x, np.array([[1.0]]), 0.0, 1.0, OdeConfig(), stats)
    assert out[0, 0] == pytest.approx(math.exp(-1), rel=1e-9)
    assert stats["steps"] >= 1


def test_config_validation():
    with pytest.raises(ValueError):
        OdeConfig(abs_tol=0)
    with pytest.raises(ValueError):
        OdeConfig(initial_substep=2.0)
