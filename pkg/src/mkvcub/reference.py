"""Reference values: the Example 1 closed form and an Euler-Maruyama particle solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Problem
from .reduce import pairwise_sum


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def closed_form_example1(x: float, T: float) -> float:
    """E (X_T)^+ for dX = E[X] dt + dW, X_0 = x; X_T is N(x e^T, T)."""
    if T <= 0:
        raise ValueError("T must be positive")
    m = x * math.exp(T)
    s = math.sqrt(T)
    return s * norm_pdf(m / s) + m * norm_cdf(m / s)


@dataclass(frozen=True)
class McConfig:
    particles: int = 1_000_000
    steps: int = 2000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.particles < 2:
            raise ValueError("need at least 2 particles")
        if self.steps < 1:
            raise ValueError("need at least 1 step")
        if self.antithetic and self.particles % 2:
            raise ValueError("antithetic sampling needs an even particle count")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _normals(cfg: McConfig, step: int, rows: int, d: int) -> np.ndarray:
    # Counter keyed by step: stream k never overlaps stream k+1, and the
    # draws for particle p do not depend on how many particles follow it.
    bitgen = np.random.Philox(key=[cfg.seed, 0], counter=[0, 0, 0, step])
    return np.random.Generator(bitgen).standard_normal((rows, d))


def ito_drift(problem: Problem, z: np.ndarray, moments) -> np.ndarray:
    """V_0 + 1/2 sum_i (dV_i) V_i, all at the current coupling values."""
    out = np.array(problem.vector_field(0, z, moments[0]), dtype=float)
    for i in range(1, problem.noise_dim + 1):
        v = problem.vector_field(i, z, moments[i])
        jac = problem.jacobian(i, z, moments[i])
        out += 0.5 * np.einsum("mkl,ml->mk", jac, v)
    return out


def euler_mc(problem: Problem, cfg: McConfig) -> tuple[float, float]:
    """Interacting-particle Euler-Maruyama estimate of E f(X_T) and its standard error."""
    d = problem.noise_dim
    h = problem.horizon / cfg.steps
    sqh = math.sqrt(h)
    draws = cfg.particles // 2 if cfg.antithetic else cfg.particles
    x = np.tile(problem.initial_state, (cfg.particles, 1))
    for k in range(cfg.steps):
        moments = [pairwise_sum(problem.interaction(i, x)) / cfg.particles for i in range(d + 1)]
        dw = _normals(cfg, k, draws, d) * sqh
        if cfg.antithetic:
            dw = np.concatenate([dw, -dw])
        step = ito_drift(problem, x, moments) * h
        for i in range(1, d + 1):
            step += problem.vector_field(i, x, moments[i]) * dw[:, i - 1 : i]
        x = x + step
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite particle at Euler step {k}")
    values = np.broadcast_to(np.asarray(problem.terminal(x), dtype=float), (cfg.particles,))
    if cfg.antithetic:
        values = 0.5 * (values[:draws] + values[draws:])
    mean = pairwise_sum(values) / values.size
    var = pairwise_sum((values - mean) ** 2) / (values.size - 1)
    return float(mean), float(math.sqrt(var / values.size))
