"""Cubature formulas on Wiener space and exact signatures of piecewise-linear paths.

Words are tuples over the alphabet ``{0, ..., d}``; letter 0 is the time
coordinate ``omega^0(u) = u``.  Words are graded by ``norm`` which counts
0-letters twice, so the set of words of a degree-``l`` formula is
``{w : norm(w) <= l}``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from math import factorial, sqrt

import numpy as np

MAX_SIGNATURE_ORDER = 6


def norm(word) -> int:
    """Graded length of a word: 0-letters count twice."""
    return len(word) + sum(1 for a in word if a == 0)


@lru_cache(maxsize=None)
def words(d: int, max_norm: int) -> tuple:
    """All words over {0..d} with ``norm <= max_norm``, shortest first."""
    out = []
    for length in range(max_norm + 1):
        for w in itertools.product(range(d + 1), repeat=length):
            if norm(w) <= max_norm:
                out.append(w)
    return tuple(out)


@lru_cache(maxsize=None)
def _basis(d: int, max_norm: int):
    ws = words(d, max_norm)
    index = {w: k for k, w in enumerate(ws)}
    # (word index, [(prefix index, suffix index), ...]) for Chen products
    splits = [[(index[w[:m]], index[w[m:]]) for m in range(len(w) + 1)] for w in ws]
    letters = np.array([list(w) + [-1] * (max_norm - len(w)) for w in ws], dtype=int).reshape(len(ws), max_norm)
    lengths = np.array([len(w) for w in ws])
    return ws, index, splits, letters, lengths


@dataclass(frozen=True)
class TensorSignature:
    """Truncated signature: one coefficient per word with ``norm <= order``."""

    d: int
    order: int
    coeffs: np.ndarray

    def __getitem__(self, word) -> float:
        _, index, *_ = _basis(self.d, self.order)
        return float(self.coeffs[index[tuple(word)]])

    def __mul__(self, other: "TensorSignature") -> "TensorSignature":
        """Chen product (concatenation of the underlying paths)."""
        if (self.d, self.order) != (other.d, other.order):
            raise ValueError("signatures live in different tensor algebras")
        _, _, splits, _, _ = _basis(self.d, self.order)
        a, b = self.coeffs, other.coeffs
        out = np.array([sum(a[i] * b[j] for i, j in sp) for sp in splits])
        return TensorSignature(self.d, self.order, out)

    def as_dict(self) -> dict:
        ws = words(self.d, self.order)
        return {w: float(c) for w, c in zip(ws, self.coeffs)}


def segment_exp(increment, order: int) -> TensorSignature:
    """Signature of a straight segment with increment ``(dt, dx_1..dx_d)``.

    The coefficient of a word is the product of its letters' increments over
    ``len(word)!``.
    """
    inc = np.asarray(increment, dtype=float)
    d = inc.size - 1
    ws, _, _, letters, lengths = _basis(d, order)
    padded = np.append(inc, 1.0)  # letter -1 pads short words
    prod = np.prod(padded[letters], axis=1) if letters.shape[1] else np.ones(len(ws))
    fact = np.array([factorial(k) for k in range(order + 1)], dtype=float)
    return TensorSignature(d, order, prod / fact[lengths])


@dataclass(frozen=True)
class PiecewiseLinearPath:
    """Continuous path on [0, 1], linear between breakpoints, starting at 0."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if b.ndim != 1 or len(b) < 2 or len(b) != len(v):
            raise ValueError("need matching breakpoints and values with at least one segment")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if np.any(v[0] != 0.0):
            raise ValueError("path must start at the origin")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        """Segment increments with the time coordinate first, shape (segments, d+1)."""
        return np.column_stack([np.diff(self.breakpoints), np.diff(self.values, axis=0)])

    def __neg__(self):
        return PiecewiseLinearPath(self.breakpoints, -self.values)


@dataclass(frozen=True)
class RescaledPath:
    """A unit path mapped onto [t, s]: time affinely, space scaled by sqrt(s - t)."""

    t: float
    s: float
    breakpoints: np.ndarray
    values: np.ndarray

    def increments(self) -> np.ndarray:
        return np.column_stack([np.diff(self.breakpoints), np.diff(self.values, axis=0)])

    def slopes(self) -> np.ndarray:
        """d omega^i / du on each linear piece, time component first."""
        inc = self.increments()
        return inc / inc[:, :1]


def rescale(path: PiecewiseLinearPath, t: float, s: float) -> RescaledPath:
    if not s > t:
        raise ValueError(f"rescale needs t < s, got [{t}, {s}]")
    h = s - t
    return RescaledPath(t, s, t + h * path.breakpoints, sqrt(h) * path.values)


def signature(path, t: float = 0.0, s: float = 1.0, order: int = 5) -> TensorSignature:
    """Exact truncated signature of ``path`` (including ``omega^0(u) = u``).

    For a ``PiecewiseLinearPath`` the interval ``[t, s]`` is the rescaling
    window, so ``signature(path, 0, h)`` is the signature of ``path`` rescaled
    to ``[0, h]``.  A ``RescaledPath`` is used as-is.
    """
    if order > MAX_SIGNATURE_ORDER:
        raise ValueError(f"signature order {order} exceeds {MAX_SIGNATURE_ORDER}")
    if isinstance(path, PiecewiseLinearPath):
        path = rescale(path, t, s)
    inc = path.increments()
    sig = segment_exp(inc[0], order)
    for row in inc[1:]:
        sig = sig * segment_exp(row, order)
    return sig


def canonical_word(word) -> tuple:
    relabel = {}
    return tuple(0 if a == 0 else relabel.setdefault(a, len(relabel) + 1) for a in word)


@lru_cache(maxsize=1)
def _moment_table():
    raw = json.loads(resources.files("mkvcub.data").joinpath("brownian_moments.json").read_text())
    table = {}
    for key, val in raw["moments"].items():
        w = tuple(int(a) for a in key.split(",")) if key else ()
        table[w] = float(Fraction(val))
    return raw["max_norm"], table


def brownian_moment(word) -> float:
    """E of the Stratonovich iterated integral of (t, B_t) over [0, 1]."""
    max_norm, table = _moment_table()
    word = tuple(word)
    if norm(word) > max_norm:
        raise ValueError(f"no moment stored for words of norm {norm(word)} > {max_norm}")
    return table.get(canonical_word(word), 0.0)


@dataclass(frozen=True)
class CubatureFormula:
    degree: int
    d: int
    paths: tuple
    weights: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "paths", tuple(self.paths))
        if self.degree < 1 or self.degree % 2 == 0:
            raise ValueError("cubature degree must be an odd positive integer")
        if len(self.paths) != len(w) or len(w) == 0:
            raise ValueError("one weight per path required")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-15 * len(w):
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if any(p.dim != self.d for p in self.paths):
            raise ValueError("path dimension does not match formula dimension")

    @property
    def size(self) -> int:
        return len(self.paths)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "degree": self.degree,
                "d": self.d,
                "weights": self.weights.tolist(),
                "paths": [{"breakpoints": p.breakpoints.tolist(), "values": p.values.tolist()} for p in self.paths],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "CubatureFormula":
        doc = json.loads(text)
        paths = [PiecewiseLinearPath(p["breakpoints"], p["values"]) for p in doc["paths"]]
        return cls(doc["degree"], doc["d"], paths, doc["weights"], doc.get("name", ""))


@dataclass
class DegreeReport:
    degree: int
    tol: float
    residuals: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals.values())

    @property
    def failures(self) -> dict:
        return {w: r for w, r in self.residuals.items() if abs(r) > self.tol}

    @property
    def passed(self) -> bool:
        return not self.failures


def expected_signature(formula: CubatureFormula, order: int | None = None) -> TensorSignature:
    order = formula.degree if order is None else order
    coeffs = sum(w * signature(p, 0.0, 1.0, order).coeffs for w, p in zip(formula.weights, formula.paths))
    return TensorSignature(formula.d, order, coeffs)


def verify_degree(formula: CubatureFormula, tol: float = 1e-12) -> DegreeReport:
    """Compare the formula's averaged signature with Brownian moments on every word."""
    avg = expected_signature(formula)
    report = DegreeReport(formula.degree, tol)
    for w, c in zip(words(formula.d, formula.degree), avg.coeffs):
        report.residuals[w] = float(c) - brownian_moment(w)
    return report


# -- built-in formulas -------------------------------------------------------

def _degree3(d: int) -> CubatureFormula:
    # straight lines to the 2^d corners (+-1, ..., +-1): E z_i z_j = delta_ij
    paths, weights = [], []
    for signs in itertools.product((1.0, -1.0), repeat=d):
        paths.append(PiecewiseLinearPath([0.0, 1.0], [[0.0] * d, list(signs)]))
        weights.append(1.0 / 2**d)
    return CubatureFormula(3, d, paths, weights, name=f"degree3_d{d}")


@lru_cache(maxsize=None)
def builtin_formula(degree: int, d: int) -> CubatureFormula:
    """Built-in formulas: degree 3 in any dimension, degree 5 for d = 1, 2."""
    if degree == 3 and d >= 1:
        return _degree3(d)
    if degree == 5 and d in (1, 2):
        text = resources.files("mkvcub.data").joinpath(f"cubature_deg5_d{d}.json").read_text()
        return CubatureFormula.from_json(text)
    raise ValueError(f"no built-in cubature formula of degree {degree} in dimension {d}")
