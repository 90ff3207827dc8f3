"""Lagrange interpolation through trailing tree expectations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ode import ScalarPolynomial


@dataclass(frozen=True)
class InterpolationWindow:
    times: tuple
    values: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.times)
        v = tuple(float(x) for x in self.values)
        if len(t) != len(v) or not t:
            raise ValueError("window needs matching, non-empty times and values")
        if len(set(t)) != len(t):
            raise ValueError("duplicate interpolation times")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return len(self.times)


def divided_differences(x, y) -> np.ndarray:
    """Newton coefficients a_k with p(t) = sum_k a_k prod_{m<k} (t - x_m)."""
    x = np.asarray(x, dtype=float)
    coef = np.array(y, dtype=float)
    for j in range(1, len(x)):
        coef[j:] = (coef[j:] - coef[j - 1 : -1]) / (x[j:] - x[: -j])
    return coef


def newton_eval(coef, x_nodes, t):
    t = np.asarray(t, dtype=float)
    out = np.full_like(t, coef[-1])
    for k in range(len(coef) - 2, -1, -1):
        out = out * (t - x_nodes[k]) + coef[k]
    return out


def lagrange_poly(window: InterpolationWindow, expand_at: float | None = None) -> ScalarPolynomial:
    """Interpolating polynomial of degree < window.size, in powers of (t - expand_at).

    Newton form is built with the most recent node first; the expansion point
    defaults to the latest node, the start of the step being extrapolated.
    """
    order = np.argsort(window.times)[::-1]
    x = np.asarray(window.times)[order]
    y = np.asarray(window.values)[order]
    c = divided_differences(x, y)
    t0 = float(x[0]) if expand_at is None else float(expand_at)
    # Horner in the shifted variable s = t - t0, with (t - x_m) = s + (t0 - x_m)
    poly = np.array([c[-1]])
    for k in range(len(c) - 2, -1, -1):
        shift = t0 - x[k]
        new = np.zeros(len(poly) + 1)
        new[1:] += poly
        new[:-1] += shift * poly
        new[0] += c[k]
        poly = new
    return ScalarPolynomial(poly, t0)


def basis_values(window: InterpolationWindow, t: float) -> np.ndarray:
    """L_j(t) = prod_{i != j} (t - t_i)/(t_j - t_i)."""
    x = np.asarray(window.times)
    out = np.ones(len(x))
    for j in range(len(x)):
        for i in range(len(x)):
            if i != j:
                out[j] *= (t - x[i]) / (x[j] - x[i])
    return out


def lebesgue_constant(window: InterpolationWindow, a: float, b: float, samples: int = 2001) -> float:
    """max_{t in [a, b]} sum_j |L_j(t)| on a sampling grid."""
    return max(np.abs(basis_values(window, t)).sum() for t in np.linspace(a, b, samples))


def nodal_polynomial(times, t):
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    for x in times:
        out = out * (t - x)
    return out
