import csv
from pathlib import Path

import pytest

from gsdopt.boundaries import FutilityMode
from gsdopt.design import characterize
from gsdopt.gauss import normal_cdf
from gsdopt.model import InformationRates
from gsdopt.optimizer import OptimResult
from gsdopt.report import (
    DESIGN_COLUMNS,
    design_rows,
    format_case_study,
    format_design,
    format_rate_table,
    inflation_rows,
    sweep_rows,
    write_design_csv,
)
from tests.helpers import make_spec

GOLDEN = Path(__file__).parent / "golden" / "design_header.csv"


@pytest.fixture(scope="module")
def oc():
    return characterize(make_spec("obf", 3, rates=InformationRates((0.4, 0.7, 1.0)),
                                  futility=FutilityMode.NON_BINDING))


def test_csv_header_matches_golden(oc, tmp_path):
    path = write_design_csv(oc, tmp_path / "design.csv")
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == GOLDEN.read_text(encoding="utf-8").strip()
    assert header.split(",") == DESIGN_COLUMNS
    with path.open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["stage"] for r in rows] == ["1", "2", "3"]


def test_rows_carry_nominal_p_and_exits(oc):
    rows = design_rows(oc)
    for row, u in zip(rows, oc.boundaries.upper):
        assert row["nominal_p"] == pytest.approx(1 - normal_cdf(u))
    assert rows[-1]["lower"] == rows[-1]["upper"]
    assert sum(r["efficacy_h1"] for r in rows) == pytest.approx(0.9, abs=1e-8)


def test_ceil_changes_presentation_only(oc):
    plain = design_rows(oc)
    ceiled = design_rows(oc, ceil=True)
    for a, b in zip(plain, ceiled):
        assert b["n"] == float(int(b["n"]))
        assert 0 <= b["n"] - a["n"] < 1
        assert a["upper"] == b["upper"]


def test_efficacy_only_rows_leave_lower_blank(tmp_path):
    oc = characterize(make_spec("pocock", 2, rates=InformationRates((0.5, 1.0))))
    path = write_design_csv(oc, tmp_path / "d.csv")
    with path.open(newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["lower"] == ""
    assert rows[0]["futility_h1"] == ""


def test_text_reports(oc):
    text = format_design(oc)
    assert "MIF=" in text and "ESS:" in text
    assert len(text.splitlines()) == 5 + oc.rates.stages + 1
    case = format_case_study("demo", "original", oc)
    assert "MSS=" in case and "ESS(H0/H1)=" in case


def test_rate_table_in_percent():
    res = OptimResult(InformationRates((0.4843, 0.7, 1.0)), 10.0, 100.0, 1, 1, True)
    text = format_rate_table("pocock", {3: res}, {2: "ConvergenceError: boom"})
    assert "48.4" in text and "70.0" in text
    assert "2  failed: ConvergenceError: boom" in text


def test_inflation_and_sweep_rows(oc):
    rows = inflation_rows("obf", 0.1, "optimal", oc)
    assert [r["metric"] for r in rows] == ["mif", "eif_h0", "eif_mid", "eif_h1"]
    a = OptimResult(InformationRates((1.0,)), 10.0, 100.0, 0, 0, True)
    b = OptimResult(InformationRates((0.5, 1.0)), 9.0, 90.0, 10, 5, True)
    sweep = sweep_rows([(a, 100.0), (b, 100.0)])
    assert sweep[0]["saving_vs_previous"] is None
    assert sweep[1]["saving_vs_previous"] == pytest.approx(10.0)
    assert sweep[1]["eif_h1"] == pytest.approx(0.9)
