"""Search for degree-5 cubature formulas with 13 paths in dimension 2.

The formula is built from a symmetry group G acting on the plane:
  * one pure-time path (zero spatial part),
  * optionally the orbit of an axis-aligned path (D4 only, orbit size 4),
  * the orbit of a generic planar path with K equal-time segments.
Unknown weights and segment values are solved by nonlinear least squares
against the Brownian moment table, then polished and written as JSON.

Usage:  python scripts/search_cubature.py d4 K_axis K_generic [seed] [--write]
        python scripts/search_cubature.py d6 0 K_generic [seed] [--write]
"""
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from mkvcub import cubature as cub

OUT = Path(__file__).resolve().parents[1] / "src" / "mkvcub" / "data" / "cubature_deg5_d2.json"


def rot(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


FLIP = np.array([[1.0, 0.0], [0.0, -1.0]])
GROUPS = {
    "d4": [np.round(rot(k * np.pi / 2)) @ m for k in range(4) for m in (np.eye(2), FLIP)],
    "d6": [rot(k * np.pi / 3) @ m for k in range(6) for m in (np.eye(2), FLIP)],
}


def orbit(vals, group):
    out = []
    for g in group:
        v = vals @ g.T
        if not any(np.allclose(v, o) for o in out):
            out.append(v)
    return out


def build(x, kind, k_axis, k_gen):
    group = GROUPS[kind]
    paths = [cub.PiecewiseLinearPath([0.0, 1.0], [[0.0, 0.0], [0.0, 0.0]])]
    if kind == "d4":
        w_axis, w_gen = x[0] ** 2, x[1] ** 2
        rest = x[2:]
        axis = np.concatenate([[0.0], rest[:k_axis]])
        axis_orbit = orbit(np.column_stack([axis, 0 * axis]), group)
        rest = rest[k_axis:]
    else:
        w_axis, w_gen = 0.0, x[0] ** 2
        rest = x[1:]
        axis_orbit = []
    gen = np.vstack([[0.0, 0.0], rest[: 2 * k_gen].reshape(k_gen, 2)])
    gen_orbit = orbit(gen, group)
    weights = [1.0 - len(axis_orbit) * w_axis - len(gen_orbit) * w_gen]
    for v in axis_orbit:
        paths.append(cub.PiecewiseLinearPath(np.linspace(0, 1, k_axis + 1), v))
        weights.append(w_axis)
    for v in gen_orbit:
        paths.append(cub.PiecewiseLinearPath(np.linspace(0, 1, k_gen + 1), v))
        weights.append(w_gen)
    return paths, np.array(weights)


def residual(x, kind, k_axis, k_gen, target):
    paths, weights = build(x, kind, k_axis, k_gen)
    avg = sum(w * cub.signature(p, 0, 1, 5).coeffs for w, p in zip(weights, paths))
    return avg - target


def main():
    kind, k_axis, k_gen = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
    seed = int(sys.argv[4]) if len(sys.argv) > 4 and not sys.argv[4].startswith("-") else 0
    target = np.array([cub.brownian_moment(w) for w in cub.words(2, 5)])
    rng = np.random.default_rng(seed)
    n_w = 2 if kind == "d4" else 1
    for trial in range(40):
        x0 = np.concatenate([np.full(n_w, 0.25), rng.normal(size=k_axis * (kind == "d4") + 2 * k_gen)])
        sol = least_squares(residual, x0, args=(kind, k_axis, k_gen, target),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        paths, weights = build(sol.x, kind, k_axis, k_gen)
        err = np.abs(residual(sol.x, kind, k_axis, k_gen, target)).max()
        amp = max(np.abs(p.values).max() for p in paths)
        print(f"trial {trial}: residual {err:.2e}  paths {len(paths)}  min weight {weights.min():.4f}  max |value| {amp:.3f}")
        if err < 1e-14 and weights.min() > 0 and len(paths) == 13:
            break
    else:
        raise SystemExit("no admissible formula found")
    formula = cub.CubatureFormula(5, 2, paths, weights / weights.sum(), name=f"degree5_d2_{kind}")
    report = cub.verify_degree(formula, 1e-14)
    print("verify_degree:", report.passed, report.max_residual)
    if "--write" in sys.argv:
        OUT.write_text(formula.to_json() + "\n")
        print("wrote", OUT)


if __name__ == "__main__":
    main()
