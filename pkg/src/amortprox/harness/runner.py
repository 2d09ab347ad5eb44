from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from amortprox.apo import AdaptMode, TrainLog, apo_train
from amortprox.diffnet import Head, ParamSet, accuracy, forward, loss_eval
from amortprox.errors import AmortProxError, TrainingDivergedError
from amortprox.numkit import Rng
from amortprox.oracles import kfac_train
from amortprox.tasks import Task, build_task
from amortprox.utils.apo_logger import logger
from amortprox.utils.config_mgr import config

from .config import ExperimentConfig, SweepSpec, expand_sweep
from .metrics import write_metrics_csv, write_sidecar

METRICS_FILE = "metrics.csv"
SIDECAR_FILE = "metrics.json"
SUMMARY_FILE = "summary.csv"


@dataclass
class RunResult:
    config: ExperimentConfig
    log: TrainLog
    metrics_path: Path
    final_loss: float
    best_loss: float
    final_accuracy: float | None


def final_metrics(task: Task, theta: ParamSet) -> tuple[float, float | None]:
    """Loss on the full training set (held-out set for streaming tasks) and held-out accuracy."""
    data = task.train if task.train is not None else task.holdout
    assert data is not None
    outputs, _ = forward(task.model, theta, data.inputs)
    loss = loss_eval(task.model.head, outputs, data.targets)
    acc = None
    if task.model.head == Head.CLASSIFICATION:
        scored = task.holdout if task.holdout is not None else data
        scored_out, _ = forward(task.model, theta, scored.inputs)
        acc = accuracy(task.model.head, scored_out, scored.targets)
    return loss, acc


def train(cfg: ExperimentConfig, task: Task) -> TrainLog:
    rng = Rng(cfg.seed)
    theta0 = task.init_params(rng.child(3))
    if cfg.mode == AdaptMode.KFAC:
        k = cfg.kfac
        return kfac_train(
            task.model,
            theta0,
            task,
            cfg.steps,
            rng,
            lr=k.lr,
            damping=k.damping,
            ema_decay=k.ema_decay,
            refresh_interval=k.refresh_interval,
            cold_steps=k.cold_steps,
        )
    assert cfg.proximal is not None
    proximal = cfg.proximal.with_task_divergence(task.fsd_kind)
    return apo_train(task.model, theta0, proximal, task, cfg.steps, rng, base=cfg.base, mode=cfg.mode)


def run(cfg: ExperimentConfig, out_dir: str | Path) -> RunResult:
    """Train one experiment and write its metrics CSV and JSON sidecar into `out_dir`.

    On divergence the partial metrics are still written and the error is re-raised.
    """
    cfg = cfg.resolved()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / METRICS_FILE
    resolved_doc = cfg.model_dump(mode="json")
    task = build_task(cfg.task.model_copy(update={"seed": cfg.seed}))

    logger.info(f"Run {cfg.config_hash()}: task={cfg.task.kind}, mode={cfg.mode}, steps={cfg.steps}")
    try:
        log = train(cfg, task)
    except TrainingDivergedError as e:
        partial = e.log if isinstance(e.log, TrainLog) else TrainLog()
        write_metrics_csv(partial.rows, metrics_path)
        write_sidecar(out_dir / SIDECAR_FILE, resolved_doc, {"state": "diverged", "step": e.step})
        raise

    write_metrics_csv(log.rows, metrics_path)
    assert log.theta is not None
    final_loss, final_acc = final_metrics(task, log.theta)
    best_loss = float(np.min(log.column("train_loss")))
    status: dict[str, Any] = {"state": "ok", "rows": len(log.rows), "final_loss": final_loss}
    if final_acc is not None:
        status["final_accuracy"] = final_acc
    write_sidecar(out_dir / SIDECAR_FILE, resolved_doc, status)
    return RunResult(cfg, log, metrics_path, final_loss, best_loss, final_acc)


def _grid_point(payload: tuple[str, dict[str, Any], str]) -> dict[str, Any]:
    cfg_json, point, out_dir = payload
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    row: dict[str, Any] = {"config_hash": cfg.config_hash(), **point}
    try:
        result = run(cfg, Path(out_dir) / row["config_hash"])
    except TrainingDivergedError as e:
        row |= {"status": f"diverged at step {e.step}", "final_loss": math.nan, "best_loss": math.nan}
        row["final_accuracy"] = math.nan
        return row
    except AmortProxError as e:
        row |= {"status": f"error: {e}", "final_loss": math.nan, "best_loss": math.nan, "final_accuracy": math.nan}
        return row
    row |= {
        "status": "ok",
        "final_loss": result.final_loss,
        "best_loss": result.best_loss,
        "final_accuracy": math.nan if result.final_accuracy is None else result.final_accuracy,
    }
    return row


def rank_summary(rows: list[dict[str, Any]]) -> pd.DataFrame:
    """Completed runs first by final loss, ties and failures by config hash."""

    def key(row: dict[str, Any]) -> tuple[int, float, str]:
        loss = row["final_loss"]
        failed = not math.isfinite(loss)
        return (int(failed), math.inf if failed else loss, row["config_hash"])

    ordered = sorted(rows, key=key)
    frame = pd.DataFrame(ordered)
    frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    return frame


def grid(
    template: ExperimentConfig, sweep: SweepSpec, out_dir: str | Path, parallel: int | None = None
) -> pd.DataFrame:
    """Run every sweep point; failures are recorded in the summary and the sweep continues."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parallel = config.grid_parallel if parallel is None else parallel
    payloads = [(cfg.model_dump_json(), point, str(out_dir / "runs")) for point, cfg in expand_sweep(template, sweep)]
    logger.info(f"Grid of {len(payloads)} runs, parallel={parallel}")

    if parallel > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            rows = list(ex.map(_grid_point, payloads))
    else:
        rows = [_grid_point(p) for p in payloads]

    summary = rank_summary(rows)
    summary.to_csv(out_dir / SUMMARY_FILE, index=False, float_format="%.17g", lineterminator="\n")
    return summary
