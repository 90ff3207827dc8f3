"""Taylor expansion of moment paths t -> E phi_i(X_t).

Integrands are expression trees in the state ``z`` and the coupling slots
``e_0..e_d`` (``e_i`` stands for ``E phi_i(X_t)``, the scalar argument of
``V_i``).  Leaves are problem primitives ``d^|a|_z d^b_y V_i^k`` and
``d^|a|_z phi_i``, so derivatives are taken by composing the problem's
oracles, never by manipulating formulas.

A moment term is ``E[g(X, e)]``; an ``SBar`` is a linear combination of
products of moment terms.  The operator ``apply_T`` maps

    E g  ->  E[L g] + sum_k E[d_{e_k} g] * E[L phi_k]

with ``L = V_0 . grad + 1/2 sum_i V_i . grad (V_i . grad)`` and extends to
sums and products by linearity and the product rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .model import DerivativeOrderError, Problem
from .ode import ScalarPolynomial
from .reduce import pairwise_sum

# -- expressions ---------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Slot:
    index: int


@dataclass(frozen=True)
class Prim:
    target: tuple  # ("V", i, k) or ("phi", i)
    dz: tuple
    dy: int = 0

    @property
    def order(self) -> int:
        return sum(self.dz) + self.dy


@dataclass(frozen=True)
class Add:
    terms: tuple


@dataclass(frozen=True)
class Mul:
    factors: tuple


ZERO, ONE = Const(0.0), Const(1.0)


def add(*terms):
    flat, const = [], 0.0
    expanded = [u for t in terms for u in (t.terms if isinstance(t, Add) else (t,))]
    for t in expanded:
        if isinstance(t, Const):
            const += t.value
        else:
            flat.append(t)
    if const != 0.0:
        flat.append(Const(const))
    if not flat:
        return ZERO
    return flat[0] if len(flat) == 1 else Add(tuple(flat))


def mul(*factors):
    flat, const = [], 1.0
    expanded = [g for f in factors for g in (f.factors if isinstance(f, Mul) else (f,))]
    for f in expanded:
        if isinstance(f, Const):
            const *= f.value
        else:
            flat.append(f)
    if const == 0.0:
        return ZERO
    if const != 1.0:
        flat.insert(0, Const(const))
    if not flat:
        return ONE
    return flat[0] if len(flat) == 1 else Mul(tuple(flat))


class Differentiator:
    """Derivatives of expressions w.r.t. state coordinates and coupling slots."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.n = problem.state_dim

    def _prim(self, target, dz, dy):
        if self.problem.vanishes(target, dz, dy):
            return ZERO
        order = sum(dz) + dy
        if order > self.problem.max_order:
            raise DerivativeOrderError(
                f"expansion needs order-{order} derivatives of {target}; problem declares {self.problem.max_order}"
            )
        return Prim(target, tuple(dz), dy)

    def leaf(self, target):
        return self._prim(target, (0,) * self.n, 0)

    @lru_cache(maxsize=None)
    def dz(self, e, l: int):
        if isinstance(e, (Const, Slot)):
            return ZERO
        if isinstance(e, Prim):
            dz = list(e.dz)
            dz[l] += 1
            return self._prim(e.target, dz, e.dy)
        if isinstance(e, Add):
            return add(*(self.dz(t, l) for t in e.terms))
        return self._product_rule(e, lambda f: self.dz(f, l))

    @lru_cache(maxsize=None)
    def dslot(self, e, k: int):
        if isinstance(e, Const):
            return ZERO
        if isinstance(e, Slot):
            return ONE if e.index == k else ZERO
        if isinstance(e, Prim):
            if e.target[0] == "V" and e.target[1] == k:
                return self._prim(e.target, e.dz, e.dy + 1)
            return ZERO
        if isinstance(e, Add):
            return add(*(self.dslot(t, k) for t in e.terms))
        return self._product_rule(e, lambda f: self.dslot(f, k))

    @staticmethod
    def _product_rule(e: Mul, d):
        terms = []
        for j, f in enumerate(e.factors):
            df = d(f)
            if df != ZERO:
                terms.append(mul(*e.factors[:j], df, *e.factors[j + 1 :]))
        return add(*terms)

    def directional(self, i: int, e):
        """V_i . grad_z e, with V_i evaluated at slot e_i."""
        return add(*(mul(self.leaf(("V", i, l)), self.dz(e, l)) for l in range(self.n)))

    @lru_cache(maxsize=None)
    def generator(self, e):
        """L e = V_0 . grad e + 1/2 sum_{i>=1} V_i . grad (V_i . grad e)."""
        out = [self.directional(0, e)]
        for i in range(1, self.problem.noise_dim + 1):
            out.append(mul(Const(0.5), self.directional(i, self.directional(i, e))))
        return add(*out)

    @lru_cache(maxsize=None)
    def slots_of(self, e) -> frozenset:
        if isinstance(e, Slot):
            return frozenset([e.index])
        if isinstance(e, Prim):
            return frozenset([e.target[1]]) if e.target[0] == "V" else frozenset()
        if isinstance(e, (Add, Mul)):
            parts = e.terms if isinstance(e, Add) else e.factors
            return frozenset().union(*(self.slots_of(p) for p in parts))
        return frozenset()


def max_order(e) -> int:
    if isinstance(e, Prim):
        return e.order
    if isinstance(e, (Add, Mul)):
        parts = e.terms if isinstance(e, Add) else e.factors
        return max((max_order(p) for p in parts), default=0)
    return 0


# -- moment algebra --------------------------------------------------------------


@dataclass(frozen=True)
class MomentTerm:
    """E[g(X, e)]."""

    integrand: object

    @property
    def is_constant(self) -> bool:
        return isinstance(self.integrand, Const)


@dataclass(frozen=True)
class SBar:
    """sum_m coeff_m * prod_j E[g_{m,j}]; an empty product is the constant 1."""

    terms: tuple = ()  # ((coeff, (MomentTerm, ...)), ...)

    def __add__(self, other: "SBar") -> "SBar":
        return SBar(self.terms + other.terms)

    def scale(self, c: float) -> "SBar":
        return SBar(tuple((c * a, prod) for a, prod in self.terms))

    def times(self, other: "SBar") -> "SBar":
        return SBar(tuple((a * b, p + q) for a, p in self.terms for b, q in other.terms))

    @classmethod
    def moment(cls, integrand, coeff: float = 1.0) -> "SBar":
        return cls(((coeff, (MomentTerm(integrand),)),))

    def max_order(self) -> int:
        return max((max_order(f.integrand) for _, prod in self.terms for f in prod), default=0)

    def moment_terms(self) -> set:
        return {f for _, prod in self.terms for f in prod}


class TaylorEngine:
    """Iterated application of T for one problem, with caching of T^k(E phi_i)."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.diff = Differentiator(problem)
        self._powers: dict = {}
        self.max_order_requested = 0

    def apply_T_term(self, term: MomentTerm) -> SBar:
        g = term.integrand
        if term.is_constant:
            return SBar()
        out = SBar()
        lg = self.diff.generator(g)
        if lg != ZERO:
            out = out + SBar.moment(lg)
        for k in sorted(self.diff.slots_of(g)):
            dg = self.diff.dslot(g, k)
            if dg == ZERO:
                continue
            lphi = self.diff.generator(self.diff.leaf(("phi", k)))
            if lphi == ZERO:
                continue
            out = out + SBar.moment(dg).times(SBar.moment(lphi))
        return out

    def apply_T(self, expr: SBar) -> SBar:
        out = SBar()
        for coeff, prod in expr.terms:
            for j, factor in enumerate(prod):
                rest = SBar(((coeff, prod[:j] + prod[j + 1 :]),))
                out = out + rest.times(self.apply_T_term(factor))
        return out

    def power(self, i: int, k: int) -> SBar:
        """T^k(E phi_i), cached."""
        key = (i, k)
        if key not in self._powers:
            if k == 0:
                self._powers[key] = SBar.moment(self.diff.leaf(("phi", i)))
            else:
                self._powers[key] = self.apply_T(self.power(i, k - 1))
            self.max_order_requested = max(self.max_order_requested, self._powers[key].max_order())
        return self._powers[key]

    def coefficients(self, i: int, q: int, env: "CouplingEnvironment") -> np.ndarray:
        """(1/k!) T^k(E phi_i) under the environment, k = 0..q."""
        return np.array([evaluate(self.power(i, k), env, self.problem) / factorial(k) for k in range(q + 1)])


# -- evaluation under a tree level ----------------------------------------------


class CouplingEnvironment:
    """Expectations under one frozen tree level.

    ``moments[i]`` is E_Q phi_i(X_{t_j}); ``expect(psi)`` is the weighted
    average of ``psi`` over the level's states.  Values of integrands are
    cached by expression, so each function of the finite family touched by
    the expansion is evaluated once per level.
    """

    def __init__(self, t: float, states, weights, moments):
        self.t = float(t)
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.weights = np.asarray(weights, dtype=float)
        self.moments = np.asarray(moments, dtype=float)
        self._cache: dict = {}

    @classmethod
    def from_level(cls, problem: Problem, t, states, weights):
        states = np.atleast_2d(states)
        moments = [pairwise_sum(weights * problem.interaction(i, states)) for i in range(problem.noise_dim + 1)]
        return cls(t, states, weights, moments)

    def expect(self, values) -> float:
        return pairwise_sum(self.weights * np.broadcast_to(values, self.weights.shape))

    def moment(self, term: MomentTerm, problem: Problem) -> float:
        if term not in self._cache:
            vals = _eval_expr(term.integrand, self, problem, {})
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError("non-finite integrand value")
            self._cache[term] = self.expect(vals)
        return self._cache[term]


def _eval_expr(e, env: CouplingEnvironment, problem: Problem, memo: dict):
    key = id(e)
    if key in memo:
        return memo[key][1]
    if isinstance(e, Const):
        out = e.value
    elif isinstance(e, Slot):
        out = env.moments[e.index]
    elif isinstance(e, Prim):
        y = env.moments[e.target[1]] if e.target[0] == "V" else 0.0
        out = problem.derivative(e.target, e.dz, e.dy, env.states, y)
    elif isinstance(e, Add):
        out = 0.0
        for t in e.terms:
            out = out + _eval_expr(t, env, problem, memo)
    else:
        out = 1.0
        for f in e.factors:
            out = out * _eval_expr(f, env, problem, memo)
    memo[key] = (e, out)  # keep e alive so id() stays unique
    return out


def evaluate(expr: SBar, env: CouplingEnvironment, problem: Problem) -> float:
    total = 0.0
    for coeff, prod in expr.terms:
        val = coeff
        for term in prod:
            val *= env.moment(term, problem)
        total += val
    return float(total)


_ENGINES: dict = {}


def engine_for(problem: Problem) -> TaylorEngine:
    eng = _ENGINES.get(id(problem))
    if eng is None or eng.problem is not problem:
        eng = _ENGINES[id(problem)] = TaylorEngine(problem)
    return eng


def taylor_poly(
    problem: Problem, i: int, q: int, env: CouplingEnvironment, t_j: float | None = None, use_closed_form: bool = True
) -> ScalarPolynomial:
    """Order-q Taylor polynomial of E phi_i about t_j from the level's expectations."""
    if q < 0:
        raise ValueError("q must be non-negative")
    t_j = env.t if t_j is None else t_j
    if use_closed_form and problem.closed_form_taylor is not None:
        coeffs = np.asarray(problem.closed_form_taylor(i, q, env.moments), dtype=float)
    else:
        coeffs = engine_for(problem).coefficients(i, q, env)
    return ScalarPolynomial(coeffs, t_j)
