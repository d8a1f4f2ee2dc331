import json
import subprocess
import sys
from pathlib import Path

import pytest

from tnqed.cli import emit_report, load_config, main, run_experiment
from tnqed.errors import ValidationError
from tnqed.experiments import Outcome

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _summary(d):
    return json.loads((Path(d) / "summary.json").read_text())


def test_wiener_seed_42(tmp_path):
    assert main(["--config", str(CONFIGS / "wiener.json"), "--out", str(tmp_path)]) == 0
    s = _summary(tmp_path)
    assert s["experiment"] == "wiener" and s["params"]["seed"] == 42
    assert any(c["name"].startswith("increment_variance") for c in s["checks"])


def test_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run_experiment(CONFIGS / "wiener.json", out=tmp_path / d) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_flag_overrides(tmp_path):
    assert run_experiment(CONFIGS / "wiener.json", seed=7, out=tmp_path) == 0
    assert _summary(tmp_path)["params"]["seed"] == 7


def test_singular_toy_exits_2(tmp_path):
    assert run_experiment(CONFIGS / "dress-toy-singular.json", out=tmp_path) == 2
    s = _summary(tmp_path)
    assert s["flags"]["singular"] is True
    assert not all(c["pass"] for c in s["checks"])


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", '{"experiment": "nope"}',
                                  '{"experiment": "kubo", "colour": 1}',
                                  '{"experiment": "kubo", "params": {"bogus": 1}}',
                                  '{"experiment": "kubo", "dt_refine": 1}',
                                  '{"experiment": "kubo", "system": {}}'])
def test_malformed_config_exits_1(tmp_path, text):
    cfg = tmp_path / "bad.json"
    cfg.write_text(text)
    assert run_experiment(cfg, out=tmp_path / "o") == 1


def test_missing_config_is_validation_error(tmp_path):
    with pytest.raises(ValidationError):
        load_config(tmp_path / "absent.json")


def test_empty_outcome_is_valid_json(tmp_path):
    s = emit_report(Outcome("kubo", {}, flags={"numerical_failure": "x"}),
                    tmp_path)
    assert s["checks"] == []
    assert _summary(tmp_path) == s


def test_null_tolerance_serializes(tmp_path):
    # check_ge stores tol None; summary.json must still be strict JSON
    assert run_experiment(CONFIGS / "causality.json", out=tmp_path) == 0
    text = (tmp_path / "summary.json").read_text()
    assert "NaN" not in text and "Infinity" not in text
    assert any(c["tol"] is None for c in json.loads(text)["checks"])


def test_dt_refine_and_ratio(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "consistency",
                               "params": {"dt": 0.05, "times": [8.0]}}))
    code = run_experiment(cfg, out=tmp_path / "o", dt_refine=3)
    s = _summary(tmp_path / "o")
    names = [c["name"] for c in s["checks"]]
    assert "refinement_ratio" in names
    assert any(n.endswith("dt0.0166667") for n in names), names
    assert s["params"]["dt_refine"] == 3
    assert code in (0, 2)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tnqed", "--config", str(CONFIGS / "kubo.json"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "PASS" in r.stdout
