"""CSV datasets: numeric columns, last column is the target."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from amortprox.diffnet import Batch
from amortprox.errors import ContractError, IngestionError
from amortprox.utils.apo_logger import logger

STD_FLOOR = 1e-12


def standardize(x: np.ndarray, name: str = "column") -> np.ndarray:
    """Zero mean, unit population variance per column; constant columns become zeros."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    cols = x[:, None] if squeeze else x
    mean = cols.mean(axis=0)
    std = cols.std(axis=0)
    for j in np.flatnonzero(std < STD_FLOOR):
        logger.warning(f"Constant {name} {j} standardized to zeros")
    z = (cols - mean) / np.maximum(std, STD_FLOOR)
    return z[:, 0] if squeeze else z


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def uci_csv_load(path: str | Path) -> Batch:
    """Load a numeric CSV as a standardized regression dataset.

    A first row with any non-numeric cell is taken to be a header and skipped.
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise ContractError(f"CSV file {path} is empty") from e
    if raw.empty:
        raise ContractError(f"CSV file {path} is empty")

    first_data_row = 0
    if not all(_is_number(str(cell)) for cell in raw.iloc[0]):
        raw = raw.iloc[1:]
        first_data_row = 1
    if raw.shape[0] == 0:
        raise ContractError(f"CSV file {path} has a header but no rows")
    if raw.shape[1] < 2:
        raise ContractError(f"CSV file {path} needs at least one feature and a target column")

    values = np.empty(raw.shape, dtype=np.float64)
    for i, row in enumerate(raw.itertuples(index=False)):
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except (TypeError, ValueError) as e:
                # 1-based file row, 0-based column
                file_row = first_data_row + i + 1
                raise IngestionError(f"Unparseable cell {cell!r}", row=file_row, column=j) from e
    if not np.all(np.isfinite(values)):
        bad_i, bad_j = np.argwhere(~np.isfinite(values))[0]
        raise IngestionError("Non-finite cell", row=first_data_row + int(bad_i) + 1, column=int(bad_j))

    features = standardize(values[:, :-1], "feature")
    targets = standardize(values[:, -1:], "target")
    logger.info(f"Loaded {values.shape[0]} rows with {features.shape[1]} features from {path}")
    return Batch(features, targets)


def export_csv(data: Batch, path: str | Path) -> None:
    """Write features and target in the convention `uci_csv_load` reads, without a header."""
    targets = np.asarray(data.targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    frame = pd.DataFrame(np.hstack([data.inputs, targets]))
    frame.to_csv(path, header=False, index=False, float_format="%.17g")
