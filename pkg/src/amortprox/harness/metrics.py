"""Metrics CSV and its JSON sidecar."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from amortprox.apo.trainer import METRICS_COLUMNS, MetricsRow
from amortprox.errors import ContractError

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def write_metrics_csv(rows: list[MetricsRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame.from_records(rows, columns=list(METRICS_COLUMNS))
    frame["step"] = frame["step"].astype(np.int64)
    for col in METRICS_COLUMNS[1:]:
        frame[col] = frame[col].astype(np.float64)
    frame.to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    return path


def write_sidecar(path: str | Path, resolved_config: dict[str, Any], status: dict[str, Any]) -> Path:
    path = Path(path)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(METRICS_COLUMNS),
        "config": resolved_config,
        "status": status,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def validate_metrics_csv(path: str | Path) -> int:
    """Check a metrics file against the fixed schema; returns its row count."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ContractError(f"{path}: unreadable metrics file: {e}") from e
    if tuple(frame.columns) != METRICS_COLUMNS:
        raise ContractError(f"{path}: header {list(frame.columns)} does not match {list(METRICS_COLUMNS)}")

    prev_step = 0
    for i, row in enumerate(frame.itertuples(index=False), start=2):
        cells = dict(zip(METRICS_COLUMNS, row))
        try:
            step = int(cells["step"])
        except ValueError as e:
            raise ContractError(f"{path}:{i}: step {cells['step']!r} is not an integer") from e
        if step <= prev_step:
            raise ContractError(f"{path}:{i}: step {step} does not increase")
        prev_step = step
        for col in METRICS_COLUMNS[1:]:
            cell = cells[col]
            if cell == "":
                if col == "train_loss":
                    raise ContractError(f"{path}:{i}: train_loss is empty")
                continue
            try:
                value = float(cell)
            except ValueError as e:
                raise ContractError(f"{path}:{i}: {col} {cell!r} is not a number") from e
            if not math.isfinite(value):
                raise ContractError(f"{path}:{i}: {col} is not finite")
    return len(frame)
