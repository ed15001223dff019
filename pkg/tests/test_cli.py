import csv
import json
import subprocess
import sys

import pytest

from torusflow import cli
from torusflow.config import DEFAULTS, KINDS, load_config, resolve
from torusflow.errors import ConfigurationError
from torusflow.io import config_digest, flow_columns, format_value, write_csv
from torusflow.runner import run_experiment

ELLIPTIC = {
    "kind": "concentrate-elliptic",
    "torus": {"dimension": 2, "side": 1.0},
    "kappas": [0.1, 0.05],
    "grid": {"max_degree": 10},
}


def _dump(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_defaults_resolve_for_every_kind():
    for kind in KINDS:
        out = resolve({"kind": kind})
        assert out["seed"] == 0
        assert set(DEFAULTS[kind]) <= set(out)


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", _dump(tmp_path, ELLIPTIC)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["kappas"] == [0.1, 0.05]
    assert printed["checks"]["residual"] == 1e-10


def test_validate_quiet(tmp_path, capsys):
    assert cli.main(["validate", "--quiet", _dump(tmp_path, ELLIPTIC)]) == 0
    assert capsys.readouterr().out == ""


@pytest.mark.parametrize(
    "doc",
    [
        {"kind": "oracle", "torus": {"dimension": "x"}},
        {"kind": "nonsense"},
        {"torus": {"dimension": 2}},
    ],
)
def test_validate_rejects_schema_errors(tmp_path, doc):
    assert cli.main(["validate", _dump(tmp_path, doc)]) == 2
    with pytest.raises(ConfigurationError):
        resolve(doc)


def test_validate_rejects_bad_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["validate", str(p)]) == 2


def test_kind_mismatch_is_invalid(tmp_path):
    path = _dump(tmp_path, ELLIPTIC)
    assert cli.main(["morse", "--config", path, "--out", str(tmp_path / "run")]) == 2


def test_oracle_run_writes_manifest(tmp_path):
    out = tmp_path / "oracle"
    assert cli.main(["oracle", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "t_max_reached"
    assert set(man["files"]) == {"radius_vs_t.csv", "timeseries.csv", "resolved_config.json", "manifest.json"}
    rows = _read_csv(out / "timeseries.csv")
    assert rows[0] == flow_columns(2)
    assert _read_csv(out / "radius_vs_t.csv")[0] == ["t", "radius", "oracle", "rel_error"]


def test_elliptic_rows_per_kappa(tmp_path):
    out = tmp_path / "ell"
    assert cli.main(["concentrate-elliptic", "--config", _dump(tmp_path, ELLIPTIC), "--out", str(out)]) == 0
    rows = _read_csv(out / "residual_vs_kappa.csv")
    assert rows[0] == ["kappa", "max_radius_gap", "max_residual"]
    assert [float(r[0]) for r in rows[1:]] == [0.1, 0.05]


def test_kappa_sweep_flag(tmp_path):
    out = tmp_path / "sweep"
    doc = dict(ELLIPTIC, kappas=[0.2])
    assert cli.main(["concentrate-elliptic", "--config", _dump(tmp_path, doc), "--kappa-sweep", "0.1,0.05", "--out", str(out)]) == 0
    assert len(_read_csv(out / "residual_vs_kappa.csv")) == 3


def test_failing_check_exits_one(tmp_path):
    doc = dict(ELLIPTIC, checks={"min_slope": 100.0})
    assert cli.main(["concentrate-elliptic", "--config", _dump(tmp_path, doc), "--out", str(tmp_path / "r")]) == 1
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["checks"]["min_slope"]["passed"] is False
    assert man["checks"]["residual"]["passed"] is True


def test_pipeline_error_exits_three(tmp_path):
    doc = {"kind": "morse", "function": {"constant": 0.0, "cosine_sum": None, "terms": [{"k": [1, 0], "amp": 1.0}]}}
    out = tmp_path / "degenerate"
    assert cli.main(["morse", "--config", _dump(tmp_path, doc), "--out", str(out)]) == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "error"
    assert man["checks"]["pipeline"]["value"] == "NonMorseError"


def test_runs_are_deterministic(tmp_path):
    a = run_experiment(ELLIPTIC, str(tmp_path / "a"))
    b = run_experiment(ELLIPTIC, str(tmp_path / "b"))
    for name in a.files:
        if name.endswith(".csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.metrics == b.metrics


def test_resolved_config_reproduces_metrics(tmp_path):
    first = run_experiment({"kind": "morse"}, str(tmp_path / "first"))
    resolved = load_config(tmp_path / "first" / "resolved_config.json")
    again = run_experiment(resolved, str(tmp_path / "second"))
    assert again.metrics == first.metrics
    assert config_digest(resolved) == config_digest(resolve({"kind": "morse"}))
    for name in ("critical_points.csv", "flow_line_counts.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_write_csv_checks_width(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ["a", "b"], [[1]])


def test_format_value_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(format_value(v)) == v
    assert format_value(float("nan")) == "nan"
    assert format_value(True) == "1"


def test_console_script_module(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "torusflow.cli", "validate", "--quiet", _dump(tmp_path, {"kind": "morse"})],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
