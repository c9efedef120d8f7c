import json

import pytest

from gsdopt.boundaries import Family, FutilityMode, Sidedness
from gsdopt.config import (
    default_db_path,
    load_document,
    load_preset,
    load_spec,
    parse_document,
    preset_names,
    spec_to_dict,
)
from gsdopt.design import BinaryEndpoint, characterize
from gsdopt.errors import DesignValidationError
from gsdopt.report import report_dict

DOC = """
stages: 3
alpha: 0.025
beta: 0.1
boundary:
  family: pocock
endpoint:
  type: continuous
  delta: 0.5
rates: [0.3, 0.65, 1.0]
"""


def write(tmp_path, text, name="design.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_presets_load():
    assert {"adrenal", "hypress"} <= set(preset_names())
    spec = load_preset("hypress").to_spec()
    assert spec.stages == 3
    assert spec.sidedness is Sidedness.TWO_SIDED
    assert spec.boundary_rule.family is Family.OBRIEN_FLEMING
    assert spec.endpoint.kind == BinaryEndpoint(0.40, 0.25)
    adrenal = load_preset("adrenal").to_spec()
    assert adrenal.rates.values[0] == 0.25
    with pytest.raises(DesignValidationError):
        load_preset("nope")


def test_minimal_document(tmp_path):
    spec = load_spec(write(tmp_path, DOC))
    assert spec.rates.values == (0.3, 0.65, 1.0)
    assert spec.futility.mode is FutilityMode.NONE
    assert spec.sidedness is Sidedness.ONE_SIDED


def test_unordered_rates_are_reported(tmp_path):
    path = write(tmp_path, DOC.replace("[0.3, 0.65, 1.0]", "[0.5, 0.4, 1.0]"))
    with pytest.raises(DesignValidationError, match="rates not strictly increasing"):
        load_spec(path)


def test_schema_errors_name_the_field(tmp_path):
    with pytest.raises(DesignValidationError) as exc:
        load_document(write(tmp_path, DOC + "colour: blue\n"))
    assert exc.value.field == "colour"
    with pytest.raises(DesignValidationError) as exc:
        load_document(write(tmp_path, DOC.replace("pocock", "triangular")))
    assert exc.value.field == "boundary.family"


def test_yaml_syntax_error(tmp_path):
    with pytest.raises(DesignValidationError, match="line"):
        load_document(write(tmp_path, "stages: [3\nalpha: 0.025\n"))


def test_futility_defaults_to_obf_spending_for_haybittle_peto(tmp_path):
    text = DOC.replace("pocock", "haybittle-peto") + "futility:\n  mode: non-binding\n"
    spec = load_spec(write(tmp_path, text))
    assert spec.futility.mode is FutilityMode.NON_BINDING
    assert spec.futility.spending.family is Family.OBRIEN_FLEMING


def test_futility_inherits_efficacy_spending_shape(tmp_path):
    text = (DOC.replace("family: pocock", "family: kim-demets\n  rho: 3")
            + "futility:\n  mode: binding\n")
    spec = load_spec(write(tmp_path, text))
    assert spec.futility.spending.family is Family.KIM_DEMETS
    assert spec.futility.spending.rho == 3.0
    assert spec.futility.spending.sidedness is Sidedness.ONE_SIDED


def test_report_json_round_trip(tmp_path):
    spec = load_preset("hypress").to_spec()
    doc = report_dict(characterize(spec), name="hypress")
    path = write(tmp_path, json.dumps(doc), "report.json")
    again = load_spec(path)
    assert again == spec
    assert report_dict(characterize(again), name="hypress") == doc


def test_spec_to_dict_round_trip():
    spec = load_preset("adrenal").to_spec()
    assert parse_document(spec_to_dict(spec)).to_spec() == spec


def test_db_path_follows_environment(monkeypatch, tmp_path):
    monkeypatch.delenv("GSDOPT_DB", raising=False)
    monkeypatch.setenv("GSDOPT_OUT_DIR", str(tmp_path))
    assert default_db_path() == str(tmp_path / "gsdopt.db")
    monkeypatch.setenv("GSDOPT_DB", str(tmp_path / "other.db"))
    assert default_db_path() == str(tmp_path / "other.db")
