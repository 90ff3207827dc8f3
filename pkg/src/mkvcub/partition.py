"""Time partitions of [0, T]: uniform, Kusuoka and modified Kusuoka."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Optional

import numpy as np

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray
    kind: str
    gamma: Optional[float] = None
    r: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("a partition needs at least one point")
        if t[0] != 0.0:
            raise ValueError("partition must start at 0")
        steps = np.diff(t)
        if steps.size and np.any(steps < 16 * _EPS * t[-1]):
            raise ValueError("degenerate partition: step below 16 eps T")

    @property
    def n(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def describe(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "r": self.r, "n": self.n}


def uniform(T: float, n: int) -> Partition:
    if n < 1:
        raise ValueError("n must be at least 1")
    t = T * np.arange(n + 1) / n
    t[-1] = T
    return Partition(t, "uniform")


def kusuoka(T: float, n: int, gamma: float) -> Partition:
    """t_j = T (1 - (1 - j/n)^gamma), t_n = T."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if gamma < 1:
        raise ValueError("Kusuoka partition needs gamma >= 1")
    j = np.arange(n + 1)
    t = T * (1.0 - (1.0 - j / n) ** gamma)
    t[-1] = T
    return Partition(t, "kusuoka", gamma=float(gamma))


def modified_kusuoka(T: float, n: int, gamma: float, r: int) -> Partition:
    """r initial steps of size T n^(-r/(k+1)), then a Kusuoka grid on [t_r, T]."""
    if gamma < 1:
        raise ValueError("Kusuoka partition needs gamma >= 1")
    if r < 1 or not r < n / 2:
        raise ValueError(f"modified Kusuoka partition needs 1 <= r < n/2 (r={r}, n={n})")
    head = np.concatenate([[0.0], np.cumsum(T * float(n) ** (-r / (np.arange(r) + 1.0)))])
    t_r = head[-1]
    j = np.arange(r + 1, n + 1)
    tail = (T - t_r) * (1.0 - (1.0 - (j - r) / (n - r)) ** gamma) + t_r
    t = np.concatenate([head, tail])
    t[-1] = T
    return Partition(t, "modified_kusuoka", gamma=float(gamma), r=int(r))


def make_partition(kind: str, T: float, n: int, gamma: float | None = None, r: int | None = None) -> Partition:
    if kind == "uniform":
        return uniform(T, n)
    if kind == "kusuoka":
        return kusuoka(T, n, gamma)
    if kind == "modified_kusuoka":
        return modified_kusuoka(T, n, gamma, r)
    raise ValueError(f"unknown partition kind {kind!r}")


def partition_sum(p: Partition, a: float, b: float) -> float:
    """sum_{j=0}^{n-2} (t_{j+1} - t_j)^a (T - t_{j+1})^(-b)."""
    if not a > b >= 0:
        raise ValueError("need a > b >= 0")
    t = p.times
    inc = np.diff(t)[:-1]
    rem = t[-1] - t[1:-1]
    return float(np.sum(inc**a * rem ** (-b)))


def window_products(p: Partition, r: int) -> np.ndarray:
    """(1/((j+1) ^ r)!) prod_{k=0}^{j ^ (r-1)} (t_{j+1} - t_{j-k}) for each step j.

    This is the size of the Lagrange extrapolation error factor on step j.
    """
    t = p.times
    out = np.empty(p.n)
    for j in range(p.n):
        w = min(j + 1, r)
        out[j] = np.prod(t[j + 1] - t[j - np.arange(w)]) / factorial(w)
    return out


def increment_bound(p: Partition) -> np.ndarray:
    """C (1/n) (1 - (j+1)/n)^(gamma-1) with C = 2^(gamma-1) T gamma, for j < n-1."""
    g, n, T = p.gamma, p.n, p.horizon
    j = np.arange(n - 1)
    return 2 ** (g - 1) * T * g / n * (1 - (j + 1) / n) ** (g - 1)
