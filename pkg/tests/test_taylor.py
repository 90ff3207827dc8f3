import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from mkvcub.model import DerivativeOrderError, builtin_problem, symbolic_problem
from mkvcub.taylor import (
    ONE,
    ZERO,
    Const,
    CouplingEnvironment,
    MomentTerm,
    Prim,
    SBar,
    Slot,
    TaylorEngine,
    add,
    mul,
    taylor_poly,
)


def _level(seed, m, n):
    rng = np.random.default_rng(seed)
    states = rng.normal(0.5, 1.0, size=(m, n))
    w = rng.uniform(0.1, 1.0, m)
    return states, w / w.sum()


def test_example1_dirac_coefficients():
    p = builtin_problem("example1")
    env = CouplingEnvironment.from_level(p, 0.0, p.initial_state[None, :], np.ones(1))
    c = taylor_poly(p, 0, 2, env, use_closed_form=False).coeffs
    np.testing.assert_allclose(c, [0.5, 0.5, 0.25], atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(0, 2))
def test_example1_engine_matches_hook(seed, m, q):
    p = builtin_problem("example1")
    states, w = _level(seed, m, 1)
    env = CouplingEnvironment.from_level(p, 0.3, states, w)
    for i in range(2):
        a = taylor_poly(p, i, q, env, use_closed_form=False).coeffs
        b = taylor_poly(p, i, q, env, use_closed_form=True).coeffs
        np.testing.assert_allclose(a, b, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_example2_hand_oracle(seed, m):
    # c1 = (2 + sin e + e) / 2 and c2 = (1 + cos e) c1 / 4 with e = E X2
    p = builtin_problem("example2")
    states, w = _level(seed, m, 2)
    env = CouplingEnvironment.from_level(p, 0.0, states, w)
    e = float(np.sum(w * states[:, 1]))
    c = taylor_poly(p, 1, 2, env).coeffs
    c1 = 0.5 * (2 + math.sin(e) + e)
    assert c[0] == pytest.approx(e, abs=1e-12)
    assert c[1] == pytest.approx(c1, abs=1e-12)
    assert c[2] == pytest.approx(0.25 * (1 + math.cos(e)) * c1, abs=1e-12)
    for i in (0, 2):
        np.testing.assert_array_equal(taylor_poly(p, i, 2, env).coeffs, [0.0, 0.0, 0.0])


def test_example2_finite_differences_agree_at_first_order():
    p = builtin_problem("example2")
    fd = p.without_oracles()
    states, w = _level(1, 12, 2)
    a = taylor_poly(p, 1, 1, CouplingEnvironment.from_level(p, 0.0, states, w)).coeffs
    b = taylor_poly(fd, 1, 1, CouplingEnvironment.from_level(fd, 0.0, states, w)).coeffs
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_finite_differences_stop_at_second_order():
    # without structural zeros, q = 2 asks for third derivatives of phi
    fd = builtin_problem("example2").without_oracles()
    states, w = _level(1, 5, 2)
    with pytest.raises(DerivativeOrderError):
        taylor_poly(fd, 1, 2, CouplingEnvironment.from_level(fd, 0.0, states, w))


def test_order_limit_is_enforced():
    z, y = sp.symbols("z y")
    p = symbolic_problem("cubic", (z,), y, [[y * z**3], [z**2]], [z**3, 0], lambda s: s[:, 0], [1.0], 1.0, max_order=1)
    env = CouplingEnvironment.from_level(p, 0.0, np.array([[0.5]]), np.ones(1))
    with pytest.raises(DerivativeOrderError):
        taylor_poly(p, 0, 2, env)


def test_generic_order_growth():
    # q = 2 on general fields needs fourth derivatives
    z, y = sp.symbols("z y")
    p = symbolic_problem("gen", (z,), y, [[sp.sin(y * z)], [sp.cos(z) + y]], [sp.sin(z), sp.cos(z)], lambda s: s[:, 0], [0.2], 1.0)
    eng = TaylorEngine(p)
    eng.power(0, 2)
    assert eng.max_order_requested == 4


def test_gbm_moment_path():
    # Stratonovich dX = X dW: E X_t = x e^{t/2}, so T^k E X = E X / 2^k
    z, y = sp.symbols("z y")
    p = symbolic_problem("gbm", (z,), y, [[0], [z]], [z, 0], lambda s: s[:, 0], [1.0], 1.0)
    states, w = _level(2, 7, 1)
    env = CouplingEnvironment.from_level(p, 0.0, states, w)
    m = float(np.sum(w * states[:, 0]))
    c = taylor_poly(p, 0, 3, env).coeffs
    np.testing.assert_allclose(c, [m, m / 2, m / 8, m / 48], rtol=1e-12)


def test_expression_simplification():
    assert add() == ZERO and mul() == ONE
    assert mul(Const(0.0), Slot(1)) == ZERO
    assert add(Const(1.0), Const(2.0)) == Const(3.0)
    assert mul(Const(2.0), mul(Const(3.0), Slot(0))).factors[0] == Const(6.0)


def test_sbar_algebra():
    a = SBar.moment(Slot(0), 2.0)
    b = SBar.moment(Prim(("phi", 1), (0,)))
    assert len((a + b).terms) == 2
    assert a.times(b).terms[0][0] == 2.0
    assert a.scale(3.0).terms[0][0] == 6.0
    assert (a + b).moment_terms() == {MomentTerm(Slot(0)), MomentTerm(Prim(("phi", 1), (0,)))}


def test_constant_moments_have_zero_derivative():
    eng = TaylorEngine(builtin_problem("example1"))
    assert eng.apply_T_term(MomentTerm(Const(1.0))).terms == ()


def test_negative_q_rejected():
    p = builtin_problem("example1")
    env = CouplingEnvironment.from_level(p, 0.0, p.initial_state[None, :], np.ones(1))
    with pytest.raises(ValueError):
        taylor_poly(p, 0, -1, env)
