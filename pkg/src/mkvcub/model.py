"""McKean-Vlasov problems with scalar interaction.

A problem is the SDE

    dX = V_0(X, E phi_0(X)) dt + sum_i V_i(X, E phi_i(X)) o dB^i

together with a terminal function ``f`` and derivative oracles for the
``V_i`` (in both the state and the scalar argument) and the ``phi_i``.

Targets are addressed as ``("V", i, component)`` or ``("phi", i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import sympy as sp

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
FD_MAX_ORDER = 2


class DerivativeOrderError(ValueError):
    """A derivative beyond the problem's declared order was requested."""


@dataclass(frozen=True)
class DerivativeRequest:
    target: tuple
    multi_index: tuple
    y_order: int = 0
    z: tuple = ()
    y: float = 0.0

    @property
    def order(self) -> int:
        return sum(self.multi_index) + self.y_order


@dataclass(frozen=True, eq=False)
class Problem:
    """Immutable problem instance.

    ``vector_field(i, z, y)`` maps states ``z`` of shape (M, N) and scalars
    ``y`` (shape (M,) or scalar) to (M, N).  ``interaction(i, z)`` and
    ``terminal(z)`` return shape (M,).

    ``partial(target, dz, dy, z, y)`` is the analytic derivative oracle; when
    it is ``None`` central finite differences are used, limited to order
    ``FD_MAX_ORDER``.  ``is_zero(target, dz, dy)`` may report derivatives that
    vanish identically, letting the Taylor engine prune them.
    """

    name: str
    state_dim: int
    noise_dim: int
    vector_field: Callable
    interaction: Callable
    terminal: Callable
    initial_state: np.ndarray
    horizon: float
    terminal_kind: str = "lipschitz"
    partial: Optional[Callable] = None
    max_order: int = FD_MAX_ORDER
    is_zero: Optional[Callable] = None
    closed_form_taylor: Optional[Callable] = None
    notes: str = ""

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        object.__setattr__(self, "initial_state", x)
        if x.shape != (self.state_dim,):
            raise ValueError("initial state has the wrong dimension")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.terminal_kind not in ("smooth", "lipschitz"):
            raise ValueError("terminal_kind must be 'smooth' or 'lipschitz'")
        if self.partial is None:
            object.__setattr__(self, "max_order", min(self.max_order, FD_MAX_ORDER))

    @property
    def analytic(self) -> bool:
        return self.partial is not None

    def with_overrides(self, initial_state=None, horizon=None) -> "Problem":
        kw = dict(self.__dict__)
        if initial_state is not None:
            kw["initial_state"] = np.asarray(initial_state, dtype=float)
        if horizon is not None:
            kw["horizon"] = float(horizon)
        return Problem(**kw)

    def without_oracles(self) -> "Problem":
        """Same problem with the analytic oracle stripped (finite differences only)."""
        kw = dict(self.__dict__)
        kw.update(partial=None, is_zero=None, max_order=FD_MAX_ORDER)
        return Problem(**kw)

    # -- evaluation -----------------------------------------------------------

    def base(self, target, z, y=0.0) -> np.ndarray:
        z = np.atleast_2d(z)
        if target[0] == "V":
            return self.vector_field(target[1], z, y)[:, target[2]]
        if target[0] == "phi":
            return self.interaction(target[1], z)
        raise ValueError(f"unknown target {target!r}")

    def derivative(self, target, dz, dy, z, y=0.0) -> np.ndarray:
        """Vectorised partial derivative of ``target`` at states ``z`` (M, N)."""
        dz = tuple(int(k) for k in dz)
        if len(dz) != self.state_dim or min(dz, default=0) < 0 or dy < 0:
            raise ValueError(f"bad multi-index {dz} / y-order {dy}")
        if target[0] == "phi" and dy:
            raise ValueError("interaction functions have no scalar argument")
        order = sum(dz) + dy
        if order > self.max_order:
            raise DerivativeOrderError(
                f"order {order} derivative of {target} exceeds declared maximum {self.max_order}"
            )
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.partial is not None:
            out = self.partial(target, dz, dy, z, y)
        else:
            out = _finite_difference(self, target, dz, dy, z, y)
        out = np.broadcast_to(np.asarray(out, dtype=float), (z.shape[0],))
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite derivative of {target}")
        return out

    def vanishes(self, target, dz, dy) -> bool:
        if target[0] == "phi" and dy:
            return True
        return bool(self.is_zero and self.is_zero(target, tuple(dz), dy))

    def jacobian(self, i, z, y) -> np.ndarray:
        """d V_i / dz at states z: shape (M, N, N), rows are components."""
        z = np.atleast_2d(z)
        n = self.state_dim
        out = np.empty((z.shape[0], n, n))
        for k in range(n):
            for l in range(n):
                dz = [0] * n
                dz[l] = 1
                out[:, k, l] = self.derivative(("V", i, k), dz, 0, z, y)
        return out


def _finite_difference(p: Problem, target, dz, dy, z, y):
    """Central differences, one nesting level per derivative order."""
    if sum(dz) == 0 and dy == 0:
        return p.base(target, z, y)
    if dy:
        h = FD_STEP * max(1.0, float(np.max(np.abs(y))))
        up = _finite_difference(p, target, dz, dy - 1, z, y + h)
        dn = _finite_difference(p, target, dz, dy - 1, z, y - h)
        return (up - dn) / (2 * h)
    l = next(k for k, v in enumerate(dz) if v)
    rest = list(dz)
    rest[l] -= 1
    h = FD_STEP * np.maximum(1.0, np.abs(z[:, l]))
    zp, zm = z.copy(), z.copy()
    zp[:, l] += h
    zm[:, l] -= h
    up = _finite_difference(p, target, tuple(rest), 0, zp, y)
    dn = _finite_difference(p, target, tuple(rest), 0, zm, y)
    return (up - dn) / (2 * h)


def evaluate_derivative(p: Problem, req: DerivativeRequest) -> float:
    """Point evaluation of a single partial derivative."""
    if req.order > p.max_order:
        raise DerivativeOrderError(f"requested order {req.order} > {p.max_order}")
    z = np.asarray(req.z, dtype=float).reshape(1, p.state_dim)
    val = float(p.derivative(req.target, req.multi_index, req.y_order, z, req.y)[0])
    if not np.isfinite(val):
        raise FloatingPointError("non-finite derivative")
    return val


def lie_bracket(p: Problem, i: int, j: int, z, y) -> np.ndarray:
    """[V_i, V_j](z, y) = dV_j V_i - dV_i V_j at states z (M, N)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    vi, vj = p.vector_field(i, z, y), p.vector_field(j, z, y)
    return np.einsum("mkl,ml->mk", p.jacobian(j, z, y), vi) - np.einsum("mkl,ml->mk", p.jacobian(i, z, y), vj)


# -- symbolic problem construction ------------------------------------------

def _broadcast(fn, n_rows, *args):
    return np.broadcast_to(np.asarray(fn(*args), dtype=float), (n_rows,))


def symbolic_problem(
    name,
    z_syms,
    y_sym,
    fields,
    interactions,
    terminal,
    initial_state,
    horizon,
    terminal_kind="lipschitz",
    closed_form_taylor=None,
    max_order=8,
    notes="",
) -> Problem:
    """Build a problem with exact derivative oracles from sympy expressions.

    ``fields[i]`` is a list of N expressions in ``z_syms`` and ``y_sym``;
    ``interactions[i]`` an expression in ``z_syms``.  ``terminal`` is a numpy
    callable on (M, N) arrays.
    """
    z_syms = tuple(z_syms)
    n = len(z_syms)
    exprs = {}
    for i, comps in enumerate(fields):
        if len(comps) != n:
            raise ValueError(f"V_{i} needs {n} components")
        for k, e in enumerate(comps):
            exprs[("V", i, k)] = sp.sympify(e)
    for i, e in enumerate(interactions):
        e = sp.sympify(e)
        if y_sym in e.free_symbols:
            raise ValueError("interaction functions may not depend on the scalar argument")
        exprs[("phi", i)] = e
    args = (*z_syms, y_sym)

    @lru_cache(maxsize=None)
    def derived(target, dz, dy):
        e = exprs[target]
        for l, k in enumerate(dz):
            if k:
                e = sp.diff(e, z_syms[l], k)
        if dy:
            e = sp.diff(e, y_sym, dy)
        return e

    @lru_cache(maxsize=None)
    def compiled(target, dz, dy):
        return sp.lambdify(args, derived(target, dz, dy), "numpy")

    def call(target, dz, dy, z, y):
        fn = compiled(target, dz, dy)
        return _broadcast(fn, z.shape[0], *(z[:, l] for l in range(n)), y)

    zero_dz = (0,) * n

    def vector_field(i, z, y):
        z = np.atleast_2d(z)
        return np.column_stack([call(("V", i, k), zero_dz, 0, z, y) for k in range(n)])

    def interaction(i, z):
        z = np.atleast_2d(z)
        return call(("phi", i), zero_dz, 0, z, 0.0)

    def is_zero(target, dz, dy):
        return derived(target, tuple(dz), dy) == 0

    return Problem(
        name=name,
        state_dim=n,
        noise_dim=len(fields) - 1,
        vector_field=vector_field,
        interaction=interaction,
        terminal=terminal,
        initial_state=initial_state,
        horizon=horizon,
        terminal_kind=terminal_kind,
        partial=call,
        max_order=max_order,
        is_zero=is_zero,
        closed_form_taylor=closed_form_taylor,
        notes=notes,
    )


# -- built-in registry -------------------------------------------------------

def _example1_taylor(i, q, moments):
    """(T^k)(E phi_i) / k! for example 1: E X reproduces itself under T."""
    from math import factorial

    if i == 0:
        return np.array([moments[0] / factorial(k) for k in range(q + 1)])
    return np.zeros(q + 1)


def example1() -> Problem:
    z, y = sp.symbols("z1 y")
    return symbolic_problem(
        "example1",
        (z,),
        y,
        fields=[[y], [sp.Integer(1)]],
        interactions=[z, sp.Integer(0)],
        terminal=lambda s: np.maximum(np.atleast_2d(s)[:, 0], 0.0),
        initial_state=[0.5],
        horizon=10.0,
        closed_form_taylor=_example1_taylor,
        notes="dX = E[X] dt + dB; X_t = x e^t + B_t; f(x) = max(x, 0)",
    )


def example2() -> Problem:
    z1, z2, y = sp.symbols("z1 z2 y")
    return symbolic_problem(
        "example2",
        (z1, z2),
        y,
        fields=[[0, 0], [2 + sp.sin(y), z1], [z2, z1]],
        interactions=[sp.Integer(0), z2, sp.Integer(0)],
        terminal=lambda s: np.maximum(np.atleast_2d(s)[:, 0], 0.0),
        initial_state=[1.0, 0.5],
        horizon=1.0,
        notes="V1 = (2 + sin E[X2], X1), V2 = (X2, X1); f(x) = max(x_1, 0) on the first coordinate",
    )


_REGISTRY: dict = {"example1": example1, "example2": example2}


def register_problem(name: str, factory: Callable[[], Problem]) -> None:
    """Extension point: make a problem factory available by name (CLI configs included)."""
    if name in _REGISTRY:
        raise ValueError(f"problem {name!r} is already registered")
    _REGISTRY[name] = factory


def builtin_problem(name: str) -> Problem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; known: {sorted(_REGISTRY)}") from None


def registered_problems() -> list:
    return sorted(_REGISTRY)
