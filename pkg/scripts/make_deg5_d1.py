"""Write the closed-form degree-5 cubature formula in dimension 1.

Paths: straight lines to +-sqrt(3) (weight 1/6 each) and a five-piece path
0 -> a -> -3a -> 3a -> -a -> 0 at times k/5 with a = sqrt(15)/10 (weight 2/3).
The endpoints reproduce the 3-point Gauss-Hermite rule; the middle path fixes
the time-mixed words (int B^2 ds and friends) and cancels the odd ones.
"""
from pathlib import Path

import numpy as np

from mkvcub import cubature as cub

OUT = Path(__file__).resolve().parents[1] / "src" / "mkvcub" / "data" / "cubature_deg5_d1.json"

s3, a = np.sqrt(3.0), np.sqrt(15.0) / 10
paths = [
    cub.PiecewiseLinearPath([0, 1], [[0.0], [s3]]),
    cub.PiecewiseLinearPath(np.linspace(0, 1, 6), np.array([0, a, -3 * a, 3 * a, -a, 0])[:, None]),
    cub.PiecewiseLinearPath([0, 1], [[0.0], [-s3]]),
]
formula = cub.CubatureFormula(5, 1, paths, [1 / 6, 2 / 3, 1 / 6], name="degree5_d1")
report = cub.verify_degree(formula, 1e-14)
assert report.passed, report.failures
OUT.write_text(formula.to_json() + "\n")
print("wrote", OUT, "max residual", report.max_residual)
