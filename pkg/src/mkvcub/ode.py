"""Controlled ODEs along rescaled cubature paths.

Along a piecewise-linear path the controlled equation
``dX = sum_i V_i(X, E_i(t)) d omega^i`` is an ordinary ODE on each linear
piece.  Pieces are integrated separately with RK4 and step doubling; every
state carries its own step size so results do not depend on how a batch of
states is split up.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OdeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalarPolynomial:
    """sum_k c_k (t - t0)^k."""

    coeffs: tuple
    t0: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.coeffs))
        if not c:
            c = (0.0,)
        if not all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t):
        s = np.asarray(t, dtype=float) - self.t0
        out = np.full_like(s, self.coeffs[-1])
        for c in self.coeffs[-2::-1]:
            out = out * s + c
        return out

    def integral(self, a: float, b: float) -> float:
        sa, sb = a - self.t0, b - self.t0
        return sum(c * (sb ** (k + 1) - sa ** (k + 1)) / (k + 1) for k, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class OdeConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_substeps: int = 100_000
    initial_substep: float = 1.0  # fraction of the linear piece

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.initial_substep <= 1:
            raise ValueError("initial_substep must lie in (0, 1]")


def _rhs_factory(problem, polys, slopes):
    active = [i for i, s in enumerate(slopes) if s != 0.0]

    def rhs(t, x):
        out = np.zeros_like(x)
        for i in active:
            out += slopes[i] * problem.vector_field(i, x, polys[i](t))
        return out

    return rhs


def _rk4(rhs, t, x, h):
    hc = h[:, None]
    k1 = rhs(t, x)
    k2 = rhs(t + h / 2, x + hc / 2 * k1)
    k3 = rhs(t + h / 2, x + hc / 2 * k2)
    k4 = rhs(t + h, x + hc * k3)
    return x + hc / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_piece(rhs, x, a: float, b: float, cfg: OdeConfig, stats: dict | None = None):
    """Integrate x' = rhs(t, x) from a to b for every row of x, adaptively."""
    x = np.array(x, dtype=float)
    m = x.shape[0]
    length = b - a
    t = np.full(m, a)
    h = np.full(m, cfg.initial_substep * length)
    todo = np.arange(m)
    attempts = 0
    while todo.size:
        attempts += 1
        if attempts > cfg.max_substeps:
            raise OdeError(f"substep budget exhausted on [{a}, {b}] for {todo.size} states")
        whole = todo.size == m
        tt = t if whole else t[todo]
        xx = x if whole else x[todo]
        remaining = b - tt
        last = h[todo] >= remaining
        hh = np.where(last, remaining, h[todo])
        full = _rk4(rhs, tt, xx, hh)
        half = _rk4(rhs, tt, xx, hh / 2)
        half = _rk4(rhs, tt + hh / 2, half, hh / 2)
        err = np.max(np.abs(full - half), axis=1)
        tol = cfg.abs_tol + cfg.rel_tol * np.max(np.abs(half), axis=1)
        if not np.all(np.isfinite(half)):
            raise OdeError("non-finite state during integration")
        ok = err <= tol
        factor = np.clip(0.9 * (tol / np.maximum(err, 1e-300)) ** 0.2, 0.2, 4.0)
        idx = todo[ok]
        x[idx] = half[ok]
        t[idx] = np.where(last[ok], b, tt[ok] + hh[ok])
        h[todo] = hh * factor
        finished = ok & last
        todo = todo[~finished]
        if stats is not None:
            stats["steps"] = stats.get("steps", 0) + int(ok.sum())
            stats["rejected"] = stats.get("rejected", 0) + int((~ok).sum())
    return x


def solve_segment(problem, x0, path, polys, cfg: OdeConfig = OdeConfig(), stats: dict | None = None):
    """Transport states ``x0`` (M, N) along a rescaled path on [t_j, t_{j+1}].

    ``polys[i]`` supplies the scalar argument of ``V_i`` as a function of time.
    The integration restarts at every breakpoint of the path.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    if len(polys) != problem.noise_dim + 1:
        raise ValueError("need one scalar polynomial per vector field")
    bps = path.breakpoints
    for k, slopes in enumerate(path.slopes()):
        rhs = _rhs_factory(problem, polys, slopes)
        x = integrate_piece(rhs, x, bps[k], bps[k + 1], cfg, stats)
    if not np.all(np.isfinite(x)):
        raise OdeError("non-finite state after segment")
    return x


def rk4_fixed(problem, x0, path, polys, substeps: int = 10_000):
    """Fixed-step RK4 along the path; reference integrator for tests."""
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    bps = path.breakpoints
    for k, slopes in enumerate(path.slopes()):
        rhs = _rhs_factory(problem, polys, slopes)
        h = (bps[k + 1] - bps[k]) / substeps
        hv = np.full(x.shape[0], h)
        for s in range(substeps):
            x = _rk4(rhs, np.full(x.shape[0], bps[k] + s * h), x, hv)
    return x
