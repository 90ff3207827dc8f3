import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from mkvcub import harness
from mkvcub.cli import main
from mkvcub.harness import CSV_COLUMNS, ConvergenceRow, ExperimentConfig, fit_slope, read_csv, render_svg, write_csv

BASE = {
    "problem": "example1",
    "horizon": 1.0,
    "method": {"kind": "taylor", "q": 2},
    "formula": {"degree": 3, "d": 1},
    "partition": {"kind": "kusuoka", "gamma": 2.0},
    "sweep": [1, 2, 3, 4],
    "reference": {"kind": "closed_form"},
}


def _cfg(**overrides):
    data = json.loads(json.dumps(BASE))
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_slope_of_exact_power_law():
    ns = [2, 4, 8]
    assert fit_slope(ns, [3.0 * n**-2 for n in ns]) == pytest.approx(-2.0, abs=1e-12)


@given(st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=8), st.floats(1e-3, 1e3))
def test_slope_is_scale_invariant(errors, c):
    ns = list(range(2, 2 + len(errors)))
    assert fit_slope(ns, [c * e for e in errors]) == pytest.approx(fit_slope(ns, errors), abs=1e-9)


def test_slope_uses_trailing_window():
    ns = [1, 2, 3, 4, 5, 6]
    errs = [1.0, 1.0] + [n**-2.0 for n in ns[2:]]
    assert fit_slope(ns, errs, window=4) == pytest.approx(-2.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_slope([1], [0.5])


rows = st.lists(
    st.builds(
        ConvergenceRow,
        n=st.integers(0, 100),
        estimate=st.floats(allow_nan=False, allow_infinity=False),
        reference=st.floats(allow_nan=False, allow_infinity=False),
        abs_error=st.floats(0, 1e300),
        ref_stderr=st.floats(0, 1e3),
        nodes=st.integers(0, 2**26),
        seconds=st.floats(0, 1e5),
    ),
    max_size=6,
)


@given(rows)
def test_csv_round_trip(tmp_path_factory, rs):
    path = tmp_path_factory.mktemp("csv") / "out.csv"
    write_csv(rs, path)
    assert read_csv(path) == rs
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)


def test_strict_config():
    with pytest.raises(ValidationError):
        _cfg(gama=4.5)
    with pytest.raises(ValidationError):
        _cfg(sweep=[3, 2])
    with pytest.raises(ValidationError):
        _cfg(sweep=[])
    with pytest.raises(ValidationError):
        _cfg(method={"kind": "taylor", "r": 3})
    with pytest.raises(ValidationError):
        _cfg(partition={"kind": "kusuoka", "gamma": 2.0, "extra": 1})
    with pytest.raises(ValidationError):
        _cfg(reference={"kind": "value"})


def test_run_convergence_closed_form():
    table = harness.run_convergence(_cfg())
    assert [r.n for r in table.rows] == [1, 2, 3, 4]
    assert not table.failed and table.slope is not None
    assert all(r.abs_error == abs(r.estimate - r.reference) for r in table.rows)
    assert table.rows[-1].nodes == 16


def test_failed_rows_are_flagged_and_skipped():
    cfg = _cfg(method={"kind": "lagrange", "r": 2}, partition={"kind": "modified_kusuoka", "gamma": 2.0, "r": 2}, sweep=[3, 5, 6, 7])
    table = harness.run_convergence(cfg)
    assert table.failed
    assert table.rows[0].failed and math.isnan(table.rows[0].abs_error)
    assert not any(r.failed for r in table.rows[1:])


def test_fixed_value_reference():
    cfg = _cfg(reference={"kind": "value", "value": 1.0, "stderr": 0.01}, sweep=[2])
    table = harness.run_convergence(cfg)
    assert table.rows[0].reference == 1.0 and table.rows[0].ref_stderr == 0.01


def test_closed_form_only_for_example1():
    cfg = _cfg(problem="example2", formula={"degree": 3, "d": 2}, horizon=None)
    with pytest.raises(ValueError):
        harness.compute_reference(cfg)


def test_svg_contents():
    svg = render_svg([2, 4, 8], [1e-1, 2.5e-2, 6.25e-3], -2.0, "demo")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<circle") == 3 and "slope -2.000" in svg


def test_verify_reports():
    assert harness.verify_cubature(3, 1)["passed"] is True
    assert harness.verify_partition("kusuoka", 4.5, 3.0, 1.0)["passed"] is True
    assert harness.verify_lagrange()["passed"] is True
    assert harness.verify_taylor()["passed"] is True


def test_cli_verify(capsys):
    assert main(["verify", "cubature", "--degree", "3", "--d", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_converge_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(BASE))
    csv_path, svg_path = tmp_path / "o.csv", tmp_path / "o.svg"
    assert main(["converge", str(cfg), "--csv", str(csv_path), "--svg", str(svg_path), "--threads", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(read_csv(csv_path)) == 4 and out["failed"] is False
    assert svg_path.read_text().startswith("<svg")


def test_cli_exit_code_on_failed_row(tmp_path, capsys):
    data = dict(BASE, method={"kind": "lagrange", "r": 2}, partition={"kind": "modified_kusuoka", "gamma": 2.0, "r": 2}, sweep=[3, 5])
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(data))
    assert main(["converge", str(cfg)]) == 1
    assert json.loads(capsys.readouterr().out)["rows"][0]["abs_error"] is None


def test_cli_solve(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(BASE))
    assert main(["solve", str(cfg), "--n", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["nodes"] == 4 and len(out["moment_trace"]) == 3


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(BASE, typo=1)))
    assert main(["converge", str(cfg)]) == 2
    assert "typo" in capsys.readouterr().err


def test_shipped_configs_parse():
    from pathlib import Path

    for path in (Path(__file__).parent.parent / "configs").glob("*.json"):
        ExperimentConfig.load(path)
