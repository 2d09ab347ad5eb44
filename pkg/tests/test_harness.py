"""Tests for experiment configs, metrics files, runs, grids and the CLI."""

import json

import numpy as np
import pandas as pd
import pytest

from amortprox.apo import METRICS_COLUMNS
from amortprox.errors import ConfigError, ContractError, TrainingDivergedError
from amortprox.harness import (
    DEFAULT_REGIMES,
    SIDECAR_FILE,
    SUMMARY_FILE,
    SweepSpec,
    cli,
    expand_sweep,
    grid,
    json_pointer,
    parse_experiment,
    rank_summary,
    run,
    set_dotted,
    validate_metrics_csv,
    write_metrics_csv,
)
from amortprox.utils.config_mgr import config


def _regression_doc(**overrides):
    doc = {
        "task": {"kind": "synth-regression", "dim": 3, "hidden": 4, "batch_size": 8, "dataset_size": 64},
        "base": {"kind": {"name": "sgd-momentum"}, "lr": 0.01},
        "mode": "apo-lr",
        "proximal": {"lambda_wsd": 1.0, "meta_lr": 0.03},
        "steps": 200,
        "seed": 1,
    }
    return doc | overrides


def _illcond_doc(**overrides):
    doc = {
        "task": {"kind": "illcond-linear", "dim": 4, "kappa": 10.0, "batch_size": 16, "dataset_size": None},
        "base": {"kind": {"name": "sgd"}, "lr": 0.01},
        "mode": "none",
        "steps": 30,
    }
    return doc | overrides


def _write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


# ---------------------------------------------------------------- config


def test_parse_experiment_defaults():
    cfg = parse_experiment({"task": {"kind": "rosenbrock"}})
    assert cfg.mode == "none"
    assert cfg.steps == 200
    assert cfg.proximal is None
    assert cfg.with_proximal_defaults().proximal.meta_lr == 0.1


def test_precond_mode_gets_precond_defaults():
    cfg = parse_experiment({"task": {"kind": "rosenbrock"}, "mode": "apo-precond"}).resolved()
    assert cfg.proximal.meta_lr == 1e-4
    assert cfg.proximal.warmup_steps == 300


def test_partial_proximal_block_keeps_mode_defaults():
    doc = {"task": {"kind": "rosenbrock"}, "mode": "apo-precond", "proximal": {"lambda_wsd": 1.0}}
    cfg = parse_experiment(doc).resolved()
    assert cfg.proximal.lambda_wsd == 1.0
    assert cfg.proximal.meta_lr == 1e-4
    assert cfg.proximal.meta_opt.name == "adam"
    assert cfg.proximal.warmup_steps == 300

    doc = doc | {"proximal": {"warmup_steps": 0, "meta_lr": 1e-2}}
    cfg = parse_experiment(doc).resolved()
    assert (cfg.proximal.warmup_steps, cfg.proximal.meta_lr) == (0, 1e-2)

    lr_cfg = parse_experiment({"task": {"kind": "rosenbrock"}, "mode": "apo-lr", "proximal": {}}).resolved()
    assert lr_cfg.proximal.meta_opt.name == "rmsprop"



@pytest.mark.parametrize(
    ("doc", "pointer"),
    [
        ({"task": {"kind": "rosenbrock"}, "base": {"lr": -1.0}}, "/base/lr"),
        ({"task": {"kind": "rosenbrock"}, "bogus": 1}, "/bogus"),
        ({"task": {"kind": "mnist"}}, "/task/kind"),
        ({}, "/task"),
    ],
)
def test_parse_experiment_error_pointer(doc, pointer):
    with pytest.raises(ConfigError) as exc:
        parse_experiment(doc)
    assert exc.value.pointer == pointer


def test_parse_experiment_rejects_malformed_json():
    with pytest.raises(ConfigError):
        parse_experiment("{not json")


def test_json_pointer_escaping():
    assert json_pointer(("a/b", "c~d", 0)) == "/a~1b/c~0d/0"
    assert json_pointer(()) == ""


def test_config_hash_ignores_output():
    a = parse_experiment(_regression_doc())
    b = parse_experiment(_regression_doc(output="elsewhere"))
    c = parse_experiment(_regression_doc(seed=2))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 12


def test_seed_override(monkeypatch):
    monkeypatch.setattr(config, "apo_seed", 7)
    assert parse_experiment(_regression_doc()).resolved().seed == 7


def test_sweep_points():
    sweep = SweepSpec(axes={"base.lr": [0.1, 0.01], "seed": [0, 1, 2]})
    points = sweep.points()
    assert len(points) == 6
    assert points[0] == {"base.lr": 0.1, "seed": 0}


@pytest.mark.parametrize("axes", [{}, {"base.lr": []}])
def test_empty_sweep(axes):
    with pytest.raises(ConfigError):
        SweepSpec(axes=axes).points()


def test_set_dotted():
    doc = set_dotted({"a": {"b": 1}}, "a.c.d", 2)
    assert doc == {"a": {"b": 1, "c": {"d": 2}}}
    with pytest.raises(ConfigError):
        set_dotted({"a": 1}, "a.b", 2)


def test_expand_sweep_starts_from_mode_defaults():
    template = parse_experiment(_regression_doc(proximal=None))
    runs = expand_sweep(template, SweepSpec(axes={"proximal.lambda_wsd": [0.0, 1.0]}))
    assert [cfg.proximal.lambda_wsd for _, cfg in runs] == [0.0, 1.0]
    assert all(cfg.proximal.meta_lr == 0.1 for _, cfg in runs)


def test_expand_sweep_reports_invalid_points():
    template = parse_experiment(_regression_doc())
    with pytest.raises(ConfigError):
        expand_sweep(template, SweepSpec(axes={"base.lr": [-1.0]}))


# ---------------------------------------------------------------- metrics files


def test_run_writes_metrics_and_sidecar(out_dir):
    result = run(parse_experiment(_regression_doc()), out_dir)
    assert validate_metrics_csv(result.metrics_path) == 200
    frame = pd.read_csv(result.metrics_path)
    assert tuple(frame.columns) == METRICS_COLUMNS
    assert frame["step"].tolist() == list(range(1, 201))
    assert frame["meta_objective"].notna().sum() == 20
    assert frame["wallclock_ms"].isna().all()

    sidecar = json.loads((out_dir / SIDECAR_FILE).read_text(encoding="utf-8"))
    assert sidecar["status"]["state"] == "ok"
    assert sidecar["columns"] == list(METRICS_COLUMNS)
    assert sidecar["config"]["proximal"]["meta_interval"] == 10
    assert np.isfinite(result.final_loss)


def test_run_is_byte_identical(out_dir):
    cfg = parse_experiment(_regression_doc())
    first = run(cfg, out_dir / "a").metrics_path.read_bytes()
    second = run(cfg, out_dir / "b").metrics_path.read_bytes()
    assert first == second


def test_meta_interval_beyond_horizon_matches_fixed_lr(out_dir):
    adapted = _regression_doc(proximal={"meta_interval": 1000})
    plain = _regression_doc(mode="none")
    a = run(parse_experiment(adapted), out_dir / "apo").metrics_path.read_bytes()
    b = run(parse_experiment(plain), out_dir / "none").metrics_path.read_bytes()
    assert a == b


def test_diverged_run_keeps_partial_metrics(out_dir):
    cfg = parse_experiment(_illcond_doc(base={"kind": {"name": "sgd"}, "lr": 100.0}, steps=200))
    with pytest.raises(TrainingDivergedError) as exc:
        run(cfg, out_dir)
    rows = validate_metrics_csv(out_dir / "metrics.csv")
    assert rows == exc.value.step - 1
    status = json.loads((out_dir / SIDECAR_FILE).read_text(encoding="utf-8"))["status"]
    assert status == {"state": "diverged", "step": exc.value.step}


def test_validate_metrics_csv_rejects_bad_files(tmp_path):
    row = dict.fromkeys(METRICS_COLUMNS)
    rows = [row | {"step": 2, "train_loss": 1.0}, row | {"step": 1, "train_loss": 0.5}]
    path = write_metrics_csv(rows, tmp_path / "m.csv")
    with pytest.raises(ContractError):
        validate_metrics_csv(path)

    bad_header = tmp_path / "h.csv"
    bad_header.write_text("step,loss\n1,0.5\n", encoding="utf-8")
    with pytest.raises(ContractError):
        validate_metrics_csv(bad_header)

    empty_loss = write_metrics_csv([row | {"step": 1, "train_loss": None}], tmp_path / "e.csv")
    with pytest.raises(ContractError):
        validate_metrics_csv(empty_loss)


# ---------------------------------------------------------------- grid


def test_grid_ranks_runs_and_records_failures(out_dir):
    template = parse_experiment(_illcond_doc())
    sweep = SweepSpec(axes={"base.lr": [0.01, 0.05, 100.0]})
    summary = grid(template, sweep, out_dir, parallel=1)
    assert summary["rank"].tolist() == [1, 2, 3]
    assert summary["status"].iloc[-1].startswith("diverged")
    assert summary["base.lr"].iloc[-1] == 100.0
    ok = summary[summary["status"] == "ok"]
    assert len(ok) == 2
    assert ok["final_loss"].is_monotonic_increasing
    assert (out_dir / SUMMARY_FILE).exists()


def test_rank_summary_ignores_execution_order():
    rows = [
        {"config_hash": "b", "final_loss": 0.5},
        {"config_hash": "a", "final_loss": float("nan")},
        {"config_hash": "c", "final_loss": 0.1},
        {"config_hash": "d", "final_loss": 0.5},
    ]
    forward = rank_summary(rows)
    backward = rank_summary(list(reversed(rows)))
    assert forward["config_hash"].tolist() == ["c", "b", "d", "a"]
    pd.testing.assert_frame_equal(forward, backward)


# ---------------------------------------------------------------- CLI


def test_cli_run(tmp_path, capsys):
    path = _write_json(tmp_path / "exp.json", _illcond_doc())
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == cli.EXIT_OK
    assert (tmp_path / "out" / "metrics.csv").exists()
    assert "final loss" in capsys.readouterr().out


def test_cli_config_errors(tmp_path):
    bad = _write_json(tmp_path / "bad.json", {"task": {"kind": "rosenbrock"}, "steps": 0})
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG
    missing = tmp_path / "missing.json"
    assert cli.main(["run", "--config", str(missing), "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG


def test_cli_divergence_exit_code(tmp_path):
    path = _write_json(tmp_path / "exp.json", _illcond_doc(base={"kind": {"name": "sgd"}, "lr": 100.0}, steps=200))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "out")]) == cli.EXIT_DIVERGED


def test_cli_grid(tmp_path):
    template = _write_json(tmp_path / "exp.json", _illcond_doc(steps=10))
    sweep = _write_json(tmp_path / "sweep.json", {"axes": {"seed": [0, 1]}})
    args = ["grid", "--config", str(template), "--sweep", str(sweep), "--out", str(tmp_path / "grid")]
    assert cli.main(args) == cli.EXIT_OK
    assert len(pd.read_csv(tmp_path / "grid" / SUMMARY_FILE)) == 2


def test_cli_check_subset(tmp_path):
    report_path = tmp_path / "report.json"
    args = ["check", "--only", "damped_newton", "task_constants", "--json", str(report_path)]
    assert cli.main(args) == cli.EXIT_OK
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["success"] is True
    names = [c["name"] for c in report["data"]["checks"]]
    assert names == ["damped_newton_scalar", "rosenbrock_values", "illcond_condition_number"]


def test_cli_check_failure_exit_code(monkeypatch):
    def failing(ctx, names):
        return {"success": False, "message": "0/1 checks passed.", "data": {"checks": []}}

    monkeypatch.setattr(cli, "run_checks", failing)
    assert cli.main(["check"]) == cli.EXIT_CHECK_FAILED


def test_ppm_demo_regimes_are_paired_or_broadcast():
    parse = cli.build_parser().parse_args
    args = parse(["ppm-demo", "--out", "x.csv", "--lambda-fsd", "1", "--lambda-wsd", "0", "2"])
    assert cli._regimes(args) == (("regime0", 1.0, 0.0), ("regime1", 1.0, 2.0))
    args = parse(["ppm-demo", "--out", "x.csv", "--lambda-fsd", "1", "2", "--lambda-wsd", "0", "2", "3"])
    with pytest.raises(ConfigError):
        cli._regimes(args)


def test_cli_ppm_demo_bad_lambdas(tmp_path):
    args = ["ppm-demo", "--out", str(tmp_path / "c.csv"), "--lambda-fsd", "1", "2", "--lambda-wsd", "1", "2", "3"]
    assert cli.main(args) == cli.EXIT_CONFIG


def test_default_ppm_regimes_have_a_minimizer():
    # every default regime keeps some weight-space proximity
    assert all(lambda_wsd > 0.0 for _, _, lambda_wsd in DEFAULT_REGIMES)
    weights = {name: (fsd, wsd) for name, fsd, wsd in DEFAULT_REGIMES}
    lambda_fsd, lambda_wsd = weights["spike"]
    assert lambda_fsd >= 1e4 * lambda_wsd
