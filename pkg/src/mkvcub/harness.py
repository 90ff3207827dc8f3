"""Convergence sweeps, slope fitting, CSV/SVG output and verification reports."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .cubature import builtin_formula, verify_degree
from .lagrange import InterpolationWindow, basis_values, lagrange_poly, nodal_polynomial
from .model import builtin_problem
from .ode import OdeConfig
from .partition import make_partition, partition_sum
from .reference import McConfig, closed_form_example1, euler_mc
from .taylor import CouplingEnvironment, taylor_poly
from .tree import Lagrange, Limits, Taylor, solve

CSV_COLUMNS = ("n", "estimate", "reference", "abs_error", "ref_stderr", "nodes", "seconds")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MethodConfig(_Strict):
    kind: Literal["taylor", "lagrange"]
    q: Optional[int] = None
    r: Optional[int] = None

    @model_validator(mode="after")
    def _params(self):
        if self.kind == "taylor" and (self.q is None or self.r is not None):
            raise ValueError("taylor takes q only")
        if self.kind == "lagrange" and (self.r is None or self.q is not None):
            raise ValueError("lagrange takes r only")
        return self

    def build(self):
        return Taylor(self.q) if self.kind == "taylor" else Lagrange(self.r)


class FormulaConfig(_Strict):
    degree: int
    d: int


class PartitionConfig(_Strict):
    kind: Literal["uniform", "kusuoka", "modified_kusuoka"]
    gamma: Optional[float] = None
    r: Optional[int] = None


class ReferenceConfig(_Strict):
    kind: Literal["closed_form", "euler_mc", "value"]
    particles: int = 1_000_000
    steps: int = 2000
    seed: int = 0
    antithetic: bool = False
    value: Optional[float] = None
    stderr: float = 0.0

    @model_validator(mode="after")
    def _value(self):
        if (self.kind == "value") != (self.value is not None):
            raise ValueError("'value' is required for, and only allowed with, kind 'value'")
        return self


class OdeSettings(_Strict):
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_substeps: int = 100_000


class OutputConfig(_Strict):
    csv: Optional[str] = None
    svg: Optional[str] = None


class ExperimentConfig(_Strict):
    problem: str
    initial_state: Optional[list[float]] = None
    horizon: Optional[float] = None
    method: MethodConfig
    formula: FormulaConfig
    partition: PartitionConfig
    sweep: list[int]
    reference: ReferenceConfig
    ode: OdeSettings = OdeSettings()
    output: OutputConfig = OutputConfig()
    fit_window: int = 4
    max_nodes: int = 2**26
    workers: Optional[int] = None
    parallel_sweep: bool = False

    @field_validator("sweep")
    @classmethod
    def _sweep(cls, v):
        if not v:
            raise ValueError("sweep must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("sweep must be strictly increasing")
        if v[0] < 0:
            raise ValueError("sweep values must be non-negative")
        return v

    @field_validator("fit_window")
    @classmethod
    def _window(cls, v):
        if v < 2:
            raise ValueError("fit_window must be at least 2")
        return v

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.model_validate_json(fh.read())

    def build_problem(self):
        p = builtin_problem(self.problem)
        return p.with_overrides(self.initial_state, self.horizon)


@dataclass
class ConvergenceRow:
    n: int
    estimate: float
    reference: float
    abs_error: float
    ref_stderr: float
    nodes: int
    seconds: float
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure is not None


@dataclass
class ConvergenceTable:
    rows: list
    slope: Optional[float]
    reference: float
    ref_stderr: float
    notes: list = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.failed for r in self.rows)


def fit_slope(ns, errors, window: int = 4) -> float:
    """Least-squares slope of log(error) against log(n) over the trailing window."""
    pts = [(n, e) for n, e in zip(ns, errors) if e > 0 and math.isfinite(e)]
    pts = pts[-window:]
    if len(pts) < 2:
        raise ValueError("need at least two positive finite errors to fit a slope")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def compute_reference(cfg: ExperimentConfig, problem=None) -> tuple[float, float]:
    problem = problem or cfg.build_problem()
    ref = cfg.reference
    if ref.kind == "value":
        return ref.value, ref.stderr
    if ref.kind == "closed_form":
        if cfg.problem != "example1":
            raise ValueError("closed-form reference exists only for example1")
        return closed_form_example1(float(problem.initial_state[0]), problem.horizon), 0.0
    mc = McConfig(ref.particles, ref.steps, ref.seed, ref.antithetic)
    return euler_mc(problem, mc)


def run_convergence(cfg: ExperimentConfig, progress=None) -> ConvergenceTable:
    problem = cfg.build_problem()
    formula = builtin_formula(cfg.formula.degree, cfg.formula.d)
    method = cfg.method.build()
    ode = OdeConfig(cfg.ode.abs_tol, cfg.ode.rel_tol, cfg.ode.max_substeps)
    limits = Limits(max_nodes=cfg.max_nodes, workers=cfg.workers)
    reference, stderr = compute_reference(cfg, problem)
    notes = []
    pc = cfg.partition
    if pc.kind != "uniform" and pc.gamma is not None and pc.gamma <= cfg.formula.degree - 1:
        notes.append(f"gamma = {pc.gamma} does not exceed degree - 1 = {cfg.formula.degree - 1}")

    def one(n: int) -> ConvergenceRow:
        start = time.perf_counter()
        try:
            part = make_partition(pc.kind, problem.horizon, n, pc.gamma, pc.r)
            res = solve(problem, formula, part, method, ode, limits)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            return ConvergenceRow(n, math.nan, reference, math.nan, stderr, 0, time.perf_counter() - start, str(exc))
        row = ConvergenceRow(n, res.estimate, reference, abs(res.estimate - reference), stderr, res.nodes, res.seconds)
        if progress:
            progress(row)
        return row

    if cfg.parallel_sweep:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(one, cfg.sweep))
    else:
        rows = [one(n) for n in cfg.sweep]
    good = [r for r in rows if not r.failed]
    try:
        slope = fit_slope([r.n for r in good], [r.abs_error for r in good], cfg.fit_window)
    except ValueError as exc:
        slope = None
        notes.append(str(exc))
    return ConvergenceTable(rows, slope, reference, stderr, notes)


# -- output -----------------------------------------------------------------------


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.n, repr(r.estimate), repr(r.reference), repr(r.abs_error), repr(r.ref_stderr), r.nodes, repr(r.seconds)])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        return [
            ConvergenceRow(int(n), float(e), float(ref), float(err), float(se), int(nodes), float(sec))
            for n, e, ref, err, se, nodes, sec in reader
        ]


def render_svg(ns, errors, slope: Optional[float] = None, title: str = "", width: int = 480, height: int = 360) -> str:
    """Log-log scatter of errors against n with the fitted line."""
    pts = [(math.log10(n), math.log10(e)) for n, e in zip(ns, errors) if n > 0 and e > 0 and math.isfinite(e)]
    pad = 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle">{title}</text>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">log10 n</text>',
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" text-anchor="middle">log10 error</text>',
    ]
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        x1 = x1 if x1 > x0 else x0 + 1
        y1 = y1 if y1 > y0 else y0 + 1

        def sx(x):
            return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(y):
            return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

        for x, y in pts:
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue"/>')
        parts.append(f'<text x="{pad}" y="{height - pad + 16}">{x0:.2f}</text>')
        parts.append(f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end">{x1:.2f}</text>')
        parts.append(f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end">{y0:.2f}</text>')
        parts.append(f'<text x="{pad - 4}" y="{pad + 10}" text-anchor="end">{y1:.2f}</text>')
        if slope is not None:
            # line through the centroid of the plotted points
            cx, cy = sum(xs) / len(xs), sum(ys) / len(ys)
            ya, yb = cy + slope * (x0 - cx), cy + slope * (x1 - cx)
            parts.append(
                f'<line x1="{sx(x0):.2f}" y1="{sy(ya):.2f}" x2="{sx(x1):.2f}" y2="{sy(yb):.2f}" stroke="firebrick" stroke-dasharray="4 3"/>'
            )
            parts.append(f'<text x="{width - pad - 4}" y="{pad + 16}" text-anchor="end">slope {slope:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


# -- verification reports -------------------------------------------------------------


def verify_cubature(degree: int, d: int, tol: float = 1e-12) -> dict:
    rep = verify_degree(builtin_formula(degree, d), tol)
    return {
        "subject": "cubature",
        "degree": degree,
        "d": d,
        "words": len(rep.residuals),
        "max_residual": rep.max_residual,
        "failures": ["".join(map(str, w)) or "()" for w in rep.failures],
        "passed": bool(rep.passed),
    }


def verify_partition(kind: str, gamma: float, a: float, b: float, r: Optional[int] = None, ns=None, T: float = 1.0) -> dict:
    """n^(a-1) * partition_sum over a grid of n; bounded means max/min <= 3."""
    ns = list(ns) if ns is not None else sorted({int(v) for v in np.geomspace(10, 1000, 25)})
    vals = [n ** (a - 1) * partition_sum(make_partition(kind, T, n, gamma, r), a, b) for n in ns]
    ratio = max(vals) / min(vals)
    return {
        "subject": "partition",
        "kind": kind,
        "gamma": gamma,
        "a": a,
        "b": b,
        "n": ns,
        "normalized": vals,
        "ratio": ratio,
        "passed": bool(ratio <= 3.0),
    }


def verify_lagrange(seed: int = 0, trials: int = 50) -> dict:
    rng = np.random.default_rng(seed)
    reproduce = residual = unity = 0.0
    for _ in range(trials):
        w = int(rng.integers(1, 6))
        # nodes at least 0.1 apart keep the Lebesgue constant moderate
        times = np.sort(rng.uniform(0, 1, w))
        while np.min(np.diff(times), initial=1.0) < 0.1:
            times = np.sort(rng.uniform(0, 1, w))
        coef = rng.normal(size=w)
        t = float(rng.uniform(0, 1.2))
        p = np.polynomial.Polynomial(coef)
        interp = lagrange_poly(InterpolationWindow(times, p(times)))
        reproduce = max(reproduce, abs(interp(t) - p(t)))
        mono = lagrange_poly(InterpolationWindow(times, times**w))
        residual = max(residual, abs(t**w - mono(t) - nodal_polynomial(times, t)))
        unity = max(unity, abs(basis_values(InterpolationWindow(times, times), t).sum() - 1.0))
    return {
        "subject": "lagrange",
        "reproduction_error": reproduce,
        "nodal_residual_error": residual,
        "partition_of_unity_error": unity,
        "passed": bool(reproduce <= 1e-12 and residual <= 1e-12 and unity <= 1e-13),
    }


def verify_taylor(seed: int = 0, levels: int = 20, q: int = 2) -> dict:
    p = builtin_problem("example1")
    x = float(p.initial_state[0])
    env = CouplingEnvironment.from_level(p, 0.0, p.initial_state[None, :], np.ones(1))
    coeffs = taylor_poly(p, 0, q, env, use_closed_form=False).coeffs
    dirac = max(abs(c - e) for c, e in zip(coeffs, (x, x, x / 2)))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(levels):
        m = int(rng.integers(2, 40))
        states = rng.normal(0.5, 1.0, size=(m, 1))
        w = rng.uniform(0.1, 1.0, m)
        env = CouplingEnvironment.from_level(p, 0.0, states, w / w.sum())
        for i in range(p.noise_dim + 1):
            a = np.array(taylor_poly(p, i, q, env, use_closed_form=False).coeffs)
            b = np.array(taylor_poly(p, i, q, env, use_closed_form=True).coeffs)
            worst = max(worst, float(np.max(np.abs(a - b))))
    return {
        "subject": "taylor",
        "dirac_coefficients": list(coeffs),
        "dirac_error": dirac,
        "hook_agreement_error": worst,
        "passed": bool(dirac <= 1e-12 and worst <= 1e-10),
    }
