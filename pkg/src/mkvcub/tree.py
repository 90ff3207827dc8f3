"""Cubature tree solver for the Taylor and Lagrange interpolation methods.

The tree is expanded breadth first: the coupling expectations at t_j must be
known for the whole level before any node can be moved to t_{j+1}, so a
depth-first traversal is not possible for this class of methods.

Only two levels are held in memory.  Node ``p * N_cub + l`` of level j+1 is
the child of node ``p`` of level j along cubature path ``l``; tree paths are
never stored.  The last level is streamed: states are reduced to the
terminal expectation chunk by chunk and discarded.
"""
from __future__ import annotations

import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .cubature import CubatureFormula, rescale
from .lagrange import InterpolationWindow, lagrange_poly
from .model import Problem
from .ode import OdeConfig, OdeError, solve_segment
from .partition import Partition
from .reduce import pairwise_sum
from .taylor import CouplingEnvironment, taylor_poly

SYMBOLIC_Q_LIMIT = 2


@dataclass(frozen=True)
class Taylor:
    q: int
    use_closed_form: bool = True

    def describe(self) -> dict:
        return {"kind": "taylor", "q": self.q}


@dataclass(frozen=True)
class Lagrange:
    r: int

    def describe(self) -> dict:
        return {"kind": "lagrange", "r": self.r}


def default_workers() -> int:
    env = os.environ.get("MKVCUB_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


@dataclass(frozen=True)
class Limits:
    max_nodes: int = 2**26
    chunk_size: int = 2**16
    workers: Optional[int] = None


class BudgetError(RuntimeError):
    pass


class NodeFailure(OdeError):
    def __init__(self, msg, level, path, nodes):
        super().__init__(msg)
        self.level, self.path, self.nodes = level, path, nodes


@dataclass
class TreeLevel:
    t: float
    states: np.ndarray
    weights: np.ndarray
    moments: np.ndarray


@dataclass
class SolverResult:
    estimate: float
    moment_trace: list = field(default_factory=list)  # (t_j, [E_Q phi_i(X_{t_j})])
    nodes: int = 0
    seconds: float = 0.0
    config: dict = field(default_factory=dict)
    ode_stats: dict = field(default_factory=dict)


def level_moments(level: TreeLevel, funcs) -> np.ndarray:
    """sum_p Lambda_p psi(X^p) for each psi, reduced pairwise."""
    out = []
    for psi in funcs:
        vals = np.broadcast_to(np.asarray(psi(level.states), dtype=float), level.weights.shape)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite function value on tree level")
        out.append(pairwise_sum(level.weights * vals))
    return np.array(out)


def _coupling_funcs(problem: Problem):
    return [lambda z, i=i: problem.interaction(i, z) for i in range(problem.noise_dim + 1)]


def _check(problem, formula, partition, method, limits):
    if formula.d != problem.noise_dim:
        raise ValueError(f"formula dimension {formula.d} != noise dimension {problem.noise_dim}")
    if partition.n and not np.isclose(partition.horizon, problem.horizon, rtol=1e-12, atol=0):
        raise ValueError(f"partition ends at {partition.horizon}, problem horizon is {problem.horizon}")
    nodes = formula.size ** partition.n
    if nodes > limits.max_nodes:
        raise BudgetError(f"{formula.size}^{partition.n} = {nodes} nodes exceeds budget {limits.max_nodes}")
    if isinstance(method, Taylor):
        if method.q < 0:
            raise ValueError("q must be non-negative")
        closed = method.use_closed_form and problem.closed_form_taylor is not None
        if not closed and method.q > SYMBOLIC_Q_LIMIT:
            raise ValueError(f"symbolic Taylor expansion is limited to q <= {SYMBOLIC_Q_LIMIT}; supply closed_form_taylor")
    elif isinstance(method, Lagrange):
        if method.r < 1:
            raise ValueError("r must be at least 1")
    else:
        raise TypeError(f"unknown method {method!r}")
    return nodes


def _polynomials(problem, method, level: TreeLevel, history) -> list:
    d = problem.noise_dim
    if isinstance(method, Taylor):
        env = CouplingEnvironment(level.t, level.states, level.weights, level.moments)
        return [taylor_poly(problem, i, method.q, env, level.t, method.use_closed_form) for i in range(d + 1)]
    times = [t for t, _ in history]
    return [lagrange_poly(InterpolationWindow(times, [m[i] for _, m in history]), level.t) for i in range(d + 1)]


class _Propagator:
    def __init__(self, problem, ode, limits):
        self.problem, self.ode = problem, ode
        self.chunk = limits.chunk_size
        self.workers = limits.workers or default_workers()
        self.stats = {"steps": 0, "rejected": 0}

    def chunks(self, m):
        return [(a, min(a + self.chunk, m)) for a in range(0, m, self.chunk)]

    def run(self, states, path, polys, level, l, consume):
        """Apply ``consume(lo, hi, new_states)`` to every propagated chunk."""

        def task(bounds):
            lo, hi = bounds
            local = {}
            try:
                out = solve_segment(self.problem, states[lo:hi], path, polys, self.ode, local)
            except OdeError as exc:
                raise NodeFailure(f"level {level}, cubature path {l}, nodes [{lo}, {hi}): {exc}", level, l, (lo, hi)) from exc
            consume(lo, hi, out)
            return local

        bounds = self.chunks(states.shape[0])
        if self.workers == 1 or len(bounds) == 1:
            results = [task(b) for b in bounds]
        else:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(task, bounds))
        for local in results:
            for k, v in local.items():
                self.stats[k] = self.stats.get(k, 0) + v


def solve(
    problem: Problem,
    formula: CubatureFormula,
    partition: Partition,
    method,
    ode: OdeConfig = OdeConfig(),
    limits: Limits = Limits(),
    progress: Optional[Callable] = None,
) -> SolverResult:
    """Weak approximation of E f(X_T) on the cubature tree over ``partition``."""
    start = time.perf_counter()
    nodes = _check(problem, formula, partition, method, limits)
    funcs = _coupling_funcs(problem)
    t = partition.times
    n = partition.n
    lam = formula.weights
    n_cub = formula.size

    x0 = problem.initial_state[None, :]
    level = TreeLevel(0.0, x0, np.ones(1), np.zeros(0))
    level.moments = level_moments(level, funcs)
    trace = [(0.0, level.moments.tolist())]
    history = deque([(0.0, level.moments)], maxlen=method.r if isinstance(method, Lagrange) else 1)
    prop = _Propagator(problem, ode, limits)
    config = {
        "problem": problem.name,
        "method": method.describe(),
        "formula": {"degree": formula.degree, "d": formula.d, "paths": n_cub},
        "partition": partition.describe(),
        "ode": asdict(ode),
    }
    if progress:
        progress(0, 1, level.moments)
    if n == 0:
        # the empty tree is the Dirac mass at x
        est = pairwise_sum(problem.terminal(x0))
        return SolverResult(est, trace, 1, time.perf_counter() - start, config, prop.stats)

    for j in range(n):
        polys = _polynomials(problem, method, level, history)
        paths = [rescale(p, t[j], t[j + 1]) for p in formula.paths]
        m = level.states.shape[0]
        last = j == n - 1
        if not last:
            new_states = np.empty((m, n_cub, problem.state_dim))
            for l, path in enumerate(paths):

                def store(lo, hi, out, l=l):
                    new_states[lo:hi, l] = out

                prop.run(level.states, path, polys, j, l, store)
            weights = np.outer(level.weights, lam).ravel()
            level = TreeLevel(float(t[j + 1]), new_states.reshape(m * n_cub, -1), weights, np.zeros(0))
            level.moments = level_moments(level, funcs)
            history.append((level.t, level.moments))
        else:
            n_chunks = len(prop.chunks(m))
            partial = np.zeros((n_cub, n_chunks, 1 + len(funcs)))
            for l, path in enumerate(paths):

                def reduce_chunk(lo, hi, out, l=l):
                    w = level.weights[lo:hi] * lam[l]
                    cols = [problem.terminal(out)] + [f(out) for f in funcs]
                    for c, vals in enumerate(cols):
                        vals = np.broadcast_to(np.asarray(vals, dtype=float), w.shape)
                        if not np.all(np.isfinite(vals)):
                            raise FloatingPointError("non-finite terminal value")
                        partial[l, lo // prop.chunk, c] = pairwise_sum(w * vals)

                prop.run(level.states, path, polys, j, l, reduce_chunk)
            sums = [pairwise_sum(partial[:, :, c].ravel()) for c in range(partial.shape[2])]
            estimate = sums[0]
            level = TreeLevel(float(t[n]), np.empty((0, problem.state_dim)), np.empty(0), np.array(sums[1:]))
        trace.append((level.t, level.moments.tolist()))
        if progress:
            progress(j + 1, m * n_cub, level.moments)

    if not np.isfinite(estimate):
        raise FloatingPointError("non-finite estimate")
    return SolverResult(float(estimate), trace, nodes, time.perf_counter() - start, config, prop.stats)
