"""
One exact proximal step on a 1D regression fit, for a few discrepancy weightings.

A small network is fit to a sine curve, then a single new example is added off the curve. For each
(λ_FSD, λ_WSD) pair the exact proximal update toward that example is solved and the function is
recorded on a grid before and after.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from amortprox.apo import AdaptMode, FsdKind, ProximalConfig, apo_train
from amortprox.baseopt import BaseOptKind, BaseOptSpec
from amortprox.diffnet import Batch, Head, Model, ParamSet, forward
from amortprox.numkit import Rng
from amortprox.oracles import exact_ppm_solve
from amortprox.tasks import Task, TaskKind, TaskSpec
from amortprox.utils.apo_logger import logger

TRAIN_POINTS = 25
X_RANGE = 3.0
GRID_POINTS = 121
NEW_X = 0.125
NEW_OFFSET = 1.0
WINDOW = 0.5
FIT_STEPS = 3000
FIT_LR = 0.01
DEMO_TOL = 1e-8

# (name, λ_FSD, λ_WSD); with λ_WSD = 0 a ReLU net has no minimizer, the spike sharpens without bound
DEFAULT_REGIMES = (
    ("frozen", 1e4, 1e4),
    ("global", 0.0, 1.0),
    ("spike", 100.0, 1e-3),
)


@dataclass(frozen=True)
class PpmCurve:
    name: str
    lambda_fsd: float
    lambda_wsd: float
    x: np.ndarray
    before: np.ndarray
    after: np.ndarray

    def locality(self, x0: float = NEW_X, window: float = WINDOW) -> tuple[float, float]:
        """Mean |Δf| outside ``x0 ± window`` and |Δf| at the grid point nearest x0."""
        change = np.abs(self.after - self.before)
        outside = np.abs(self.x - x0) > window
        at_example = float(change[np.argmin(np.abs(self.x - x0))])
        return float(np.mean(change[outside])), at_example


def fit_curve(seed: int = 0) -> tuple[Model, ParamSet, Batch]:
    """Fit a one-hidden-layer ReLU network to sin(x) on evenly spaced points."""
    x = np.linspace(-X_RANGE, X_RANGE, TRAIN_POINTS)[:, None]
    data = Batch(x, np.sin(x))
    model = Model.mlp([1, 64, 1], Head.REGRESSION)
    spec = TaskSpec(
        kind=TaskKind.SYNTH_REGRESSION, dim=1, hidden=64, batch_size=TRAIN_POINTS, dataset_size=TRAIN_POINTS
    )
    task = Task(spec, model, FsdKind.KL_GAUSSIAN, train=data)
    rng = Rng(seed)
    theta0 = task.init_params(rng.child(3))
    base = BaseOptSpec(kind=BaseOptKind.adam(), lr=FIT_LR)
    log = apo_train(model, theta0, ProximalConfig(), task, FIT_STEPS, rng, base=base, mode=AdaptMode.NONE)
    assert log.theta is not None
    logger.info(f"Fit sine curve, final loss {log.final_loss:.3g}")
    return model, log.theta, data


def ppm_demo(
    regimes: tuple[tuple[str, float, float], ...] = DEFAULT_REGIMES,
    *,
    seed: int = 0,
    tol: float = DEMO_TOL,
) -> list[PpmCurve]:
    model, theta, data = fit_curve(seed)
    grid = np.linspace(-X_RANGE, X_RANGE, GRID_POINTS)[:, None]
    before, _ = forward(model, theta, grid)
    f_new, _ = forward(model, theta, np.array([[NEW_X]]))
    new_example = Batch(np.array([[NEW_X]]), f_new + NEW_OFFSET)

    curves = []
    for name, lambda_fsd, lambda_wsd in regimes:
        u = exact_ppm_solve(
            model, theta, new_example, lambda_fsd, lambda_wsd, data, tol, fsd_kind=FsdKind.KL_GAUSSIAN
        )
        after, _ = forward(model, u, grid)
        curves.append(PpmCurve(name, lambda_fsd, lambda_wsd, grid[:, 0], before[:, 0], after[:, 0]))
        logger.info(f"Regime {name}: λ_FSD={lambda_fsd:g}, λ_WSD={lambda_wsd:g} solved")
    return curves


def write_curves(curves: list[PpmCurve], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = [
        pd.DataFrame(
            {
                "regime": c.name,
                "lambda_fsd": c.lambda_fsd,
                "lambda_wsd": c.lambda_wsd,
                "x": c.x,
                "f_before": c.before,
                "f_after": c.after,
            }
        )
        for c in curves
    ]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
