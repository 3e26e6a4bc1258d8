from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from boundary_rds.harness import (
    ConfigError,
    apply_overrides,
    default_config,
    emit_plot_data,
    main,
    run_experiment,
    validate_config,
)

FAST = ["--set", "run.n_steps=300", "--set", "run.ensemble=50"]


def _read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_default_config_is_valid():
    cfg = validate_config(default_config())
    assert cfg["run"]["experiment"] == "simulate"


def test_overrides_parse_json_values():
    cfg = apply_overrides(default_config(), ["model.mu=0.25", "run.chart=unstable", "noise.q=[1, 0]"])
    assert cfg["model"]["mu"] == 0.25 and cfg["run"]["chart"] == "unstable" and cfg["noise"]["q"] == [1, 0]
    with pytest.raises(ConfigError):
        apply_overrides(default_config(), ["model.mu"])


def test_cross_field_checks():
    cfg = apply_overrides(default_config(), ["run.t0=0.015"])
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert exc.value.problems[0]["path"] == "run/t0"


def test_empty_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "empty.json"
    cfg.write_text("{}")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert {p["path"] for p in err["problems"]} == {"model", "noise", "nonlinearity"}


def test_schema_violation_exit_2(tmp_path, capsys):
    assert main(["simulate", "--set", "model.beta=0.1", "--out", str(tmp_path)]) == 2
    assert "model/beta" in capsys.readouterr().err


def test_refusal_exit_3(tmp_path, capsys):
    rc = main(["stationary", "--set", "model.mu=0.5", "--set", "run.allow_dichotomy=false", "--out", str(tmp_path)])
    assert rc == 3
    assert json.loads(capsys.readouterr().out)["reason"] == "non_dissipative"


def test_io_failure_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--out", str(blocker / "sub")]) == 4


def test_lyapunov_zero_preset_matches_closed_form(tmp_path):
    assert main(["lyapunov", "--set", "nonlinearity={\"preset\": \"zero\"}", "--out", str(tmp_path)] + FAST) == 0
    rows = _read_csv(tmp_path / "exponents.csv")
    est = np.array([float(r[1]) for r in rows[1:]])
    exact = -0.5 - np.arange(8.0) ** 2
    assert np.allclose(est, exact, rtol=1e-4)
    assert [r[4] for r in rows[1:]] == ["S"] * 8


def test_certify_bounds_default_zero_failures(tmp_path):
    assert main(["certify-bounds", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "certification.json").read_text())
    assert rep["failures"] == 0
    assert rep["ensemble"]["n_samples"] == 1000
    header = _read_csv(tmp_path / "bound_margins.csv")[0]
    assert header == ["name", "sample", "t", "lhs", "rhs", "margin", "pass"]


@pytest.mark.parametrize("experiment", ["simulate", "stationary", "lyapunov", "manifold", "convergence"])
def test_rerun_is_byte_identical(tmp_path, experiment):
    extra = ["--set", "model.n_modes=4", "--set", "model.mu=0.5"] if experiment == "manifold" else []
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([experiment, "--out", str(a)] + FAST + extra) == 0
    assert main([experiment, "--out", str(b)] + FAST + extra) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["outputs"] and ma["outputs"] == mb["outputs"]
    assert ma["config_sha256"] == mb["config_sha256"]
    for name in ma["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_flag_changes_outputs(tmp_path):
    main(["simulate", "--out", str(tmp_path / "a")])
    main(["simulate", "--out", str(tmp_path / "b"), "--seed", "7"])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert mb["seeds"]["noise"] == 7
    assert ma["outputs"]["trajectory.csv"] != mb["outputs"]["trajectory.csv"]


def test_run_experiment_does_not_mutate_config(tmp_path):
    cfg = default_config()
    before = json.dumps(cfg, sort_keys=True)
    run_experiment(cfg, tmp_path)
    assert json.dumps(cfg, sort_keys=True) == before


def test_manifest_fields(tmp_path):
    m = run_experiment(default_config(), tmp_path)
    for key in ("config_sha256", "versions", "seeds", "wall_time_s", "outputs"):
        assert key in m


def test_plot_exponent_convergence(tmp_path):
    curves = np.array([[10, 0.5, -1.0], [20, 0.45, -1.1]])
    p = emit_plot_data({"curves": curves, "ci": [0.01, 0.02]}, "exponent_convergence", tmp_path)
    rows = _read_csv(p)
    assert rows[0] == ["block", "k", "estimate", "ci"]
    assert len(rows) == 5 and rows[1][:2] == ["10", "0"]


def test_plot_chart_slice(tmp_path):
    p = emit_plot_data({"s": [-0.1, 0.0, 0.1], "values": [[0.01], [0.0], [0.01]]}, "chart_slice", tmp_path)
    rows = _read_csv(p)
    assert rows[0] == ["s", "component", "graph_value"] and len(rows) == 4


@pytest.mark.parametrize("kind", ["exponent_convergence", "decay_fit", "chart_slice", "bound_margins"])
def test_plot_empty_results_header_only(tmp_path, kind):
    assert len(_read_csv(emit_plot_data(None, kind, tmp_path))) == 1


def test_plot_unknown_kind(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data({}, "histogram", tmp_path)
