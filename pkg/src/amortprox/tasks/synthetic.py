"""
Desk-scale problem generators.

All generators draw from the Rng they are given and nothing else, so a task is a pure function of
its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from amortprox.apo.config import FsdKind
from amortprox.diffnet import Activation, Batch, Head, LayerSpec, Model, ParamSet, forward, init_params
from amortprox.errors import ContractError
from amortprox.numkit import Rng, rand_orthogonal

from .base import Task, TaskKind, TaskSpec, split_holdout
from .data import STD_FLOOR, standardize, uci_csv_load

ROSENBROCK_INIT = (1.0, -1.5)
ILLCOND_EVAL_SIZE = 256
AUTOENCODER_WIDTHS = [16, 8, 2, 8, 16]
COND_RTOL = 0.01


def rosenbrock_task(spec: TaskSpec | None = None) -> Task:
    """Rosenbrock as a 1x2 bias-free layer applied to the constant input 1.

    The weight row is the point (x, y); the predictive quantity compared by the FSD is the
    function value itself.
    """
    spec = (spec or TaskSpec(kind=TaskKind.ROSENBROCK)).model_copy(
        update={"batch_size": 1, "dataset_size": 1}
    )
    model = Model((LayerSpec(1, 2, Activation.LINEAR, has_bias=False),), Head.ROSENBROCK)
    data = Batch(np.ones((1, 1)), np.zeros((1, 2)))
    theta0 = ParamSet((np.array([ROSENBROCK_INIT]),), (None,))
    return Task(spec, model, FsdKind.SQUARED, train=data, theta0=theta0)


@dataclass(frozen=True)
class LinearTargetSampler:
    """Fresh ``x ~ N(0, I)`` with targets ``t = A x`` (row form ``x Aᵀ``)."""

    matrix: np.ndarray

    def __call__(self, rng: Rng, size: int) -> Batch:
        x = rng.normal((size, self.matrix.shape[1]))
        return Batch(x, x @ self.matrix.T)


def illcond_matrix(d: int, kappa: float, rng: Rng) -> np.ndarray:
    """``U diag(σ) Vᵀ`` with σ log-spaced from 1 down to 1/κ."""
    if d < 2:
        raise ContractError(f"d must be >= 2, got {d}")
    if kappa < 1.0:
        raise ContractError(f"condition number must be >= 1, got {kappa}")
    sigma = np.logspace(0.0, -np.log10(kappa), d)
    u = rand_orthogonal(rng, d)
    v = rand_orthogonal(rng, d)
    a = (u * sigma) @ v.T
    measured = np.linalg.svd(a, compute_uv=False)
    cond = measured[0] / measured[-1]
    if abs(cond - kappa) > COND_RTOL * kappa:
        raise ContractError(f"Constructed condition number {cond:.6g} is not within 1% of {kappa:.6g}")
    return a


def illcond_linear_task(d: int, kappa: float, rng: Rng, *, batch_size: int = 32) -> Task:
    """Two-layer linear network regressing ``t = A x`` for an ill-conditioned ``A``."""
    spec = TaskSpec(
        kind=TaskKind.ILLCOND_LINEAR, dim=d, hidden=d, batch_size=batch_size, dataset_size=None, kappa=kappa
    )
    sampler = LinearTargetSampler(illcond_matrix(d, kappa, rng))
    model = Model.mlp([d, d, d], Head.REGRESSION, hidden=Activation.LINEAR, has_bias=False)
    holdout = sampler(rng.child(ILLCOND_EVAL_SIZE), ILLCOND_EVAL_SIZE)
    return Task(spec, model, FsdKind.KL_GAUSSIAN, holdout=holdout, sampler=sampler)


def regression_target(
    n: int, d: int, noise: float, rng: Rng, *, hidden: int = 16
) -> tuple[Model, ParamSet, Batch]:
    """Standardized inputs and targets from a fixed random target MLP plus Gaussian noise.

    The returned parameters are the target MLP rewritten for the standardized coordinates, so
    with zero noise they fit every example exactly.
    """
    model = Model.mlp([d, hidden, 1], Head.REGRESSION)
    target = init_params(model, rng)
    x = rng.normal((n, d))
    y, _ = forward(model, target, x)
    y = y + noise * rng.normal((n, 1))
    x_mean, x_scale = x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR)
    y_mean, y_scale = y.mean(axis=0), np.maximum(y.std(axis=0), STD_FLOOR)
    (w_in, w_out), (b_in, b_out) = target.weights, target.biases
    assert b_in is not None and b_out is not None
    fitted = ParamSet(
        (x_scale[:, None] * w_in, w_out / y_scale),
        (b_in + x_mean @ w_in, (b_out - y_mean) / y_scale),
    )
    data = Batch(standardize(x, "feature"), standardize(y, "target"))
    return model, fitted, data


def synth_regression_task(
    n: int, d: int, noise: float, rng: Rng, *, hidden: int = 16, batch_size: int = 32
) -> Task:
    """Targets from a fixed random target MLP plus Gaussian noise; inputs and targets standardized."""
    spec = TaskSpec(
        kind=TaskKind.SYNTH_REGRESSION, dim=d, hidden=hidden, batch_size=batch_size, dataset_size=n, noise=noise
    )
    model, _, data = regression_target(n, d, noise, rng, hidden=hidden)
    train, holdout = split_holdout(data, rng)
    return Task(spec, model, FsdKind.KL_GAUSSIAN, train=train, holdout=holdout)


def class_means(d: int, classes: int, separation: float, rng: Rng) -> np.ndarray:
    """Class means ``separation * u_k`` on orthonormal (or, beyond d classes, random unit) directions."""
    if classes <= d:
        return separation * rand_orthogonal(rng, d)[:classes]
    dirs = rng.normal((classes, d))
    return separation * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def synth_classification_task(
    n: int,
    d: int,
    classes: int,
    rng: Rng,
    *,
    separation: float = 3.0,
    hidden: int = 16,
    batch_size: int = 32,
) -> Task:
    """Balanced Gaussian blobs with unit covariance; features standardized."""
    spec = TaskSpec(
        kind=TaskKind.SYNTH_CLASSIFICATION,
        dim=d,
        hidden=hidden,
        batch_size=batch_size,
        dataset_size=n,
        classes=classes,
        separation=separation,
    )
    means = class_means(d, classes, separation, rng)
    labels = rng.generator.permutation(np.arange(n) % classes)
    x = means[labels] + rng.normal((n, d))
    data = Batch(standardize(x, "feature"), labels.astype(np.int64))
    train, holdout = split_holdout(data, rng)
    model = Model.mlp([d, hidden, classes], Head.CLASSIFICATION)
    return Task(spec, model, FsdKind.KL_CATEGORICAL, train=train, holdout=holdout)


def autoencoder_data(n: int, d: int, rng: Rng) -> np.ndarray:
    """Full-rank correlated data with a decaying spectrum."""
    mixing = rand_orthogonal(rng, d) * np.logspace(0.0, -1.0, d)
    return standardize(rng.normal((n, d)) @ mixing.T, "feature")


def bottleneck_autoencoder_task(rng: Rng, *, n: int = 512, batch_size: int = 32) -> Task:
    """Untied encoder/decoder through a 2-unit bottleneck, sigmoid hidden units, linear reconstruction."""
    d = AUTOENCODER_WIDTHS[0]
    spec = TaskSpec(
        kind=TaskKind.BOTTLENECK_AUTOENCODER,
        dim=d,
        hidden=AUTOENCODER_WIDTHS[1],
        batch_size=batch_size,
        dataset_size=n,
    )
    model = Model.mlp(AUTOENCODER_WIDTHS, Head.REGRESSION, hidden=Activation.SIGMOID, output=Activation.LINEAR)
    x = autoencoder_data(n, d, rng)
    train, holdout = split_holdout(Batch(x, x.copy()), rng)
    return Task(spec, model, FsdKind.KL_GAUSSIAN, train=train, holdout=holdout)


def uci_csv_task(spec: TaskSpec, rng: Rng) -> Task:
    assert spec.csv_path is not None
    data = uci_csv_load(spec.csv_path)
    d = data.inputs.shape[1]
    train, holdout = split_holdout(data, rng)
    spec = spec.model_copy(
        update={"dim": d, "dataset_size": len(train), "batch_size": min(spec.batch_size, len(train))}
    )
    model = Model.mlp([d, spec.hidden, 1], Head.REGRESSION)
    return Task(spec, model, FsdKind.KL_GAUSSIAN, train=train, holdout=holdout)


def build_task(spec: TaskSpec) -> Task:
    """Construct the task a spec describes, seeded from ``spec.seed``."""
    task = _build(spec, Rng(spec.seed))
    return replace(task, spec=task.spec.model_copy(update={"seed": spec.seed}))


def _build(spec: TaskSpec, rng: Rng) -> Task:
    match spec.kind:
        case TaskKind.ROSENBROCK:
            return rosenbrock_task(spec)
        case TaskKind.ILLCOND_LINEAR:
            return illcond_linear_task(spec.dim, spec.kappa, rng, batch_size=spec.batch_size)
        case TaskKind.SYNTH_REGRESSION:
            n = spec.dataset_size or 512
            return synth_regression_task(
                n, spec.dim, spec.noise, rng, hidden=spec.hidden, batch_size=spec.batch_size
            )
        case TaskKind.SYNTH_CLASSIFICATION:
            n = spec.dataset_size or 512
            return synth_classification_task(
                n,
                spec.dim,
                spec.classes,
                rng,
                separation=spec.separation,
                hidden=spec.hidden,
                batch_size=spec.batch_size,
            )
        case TaskKind.BOTTLENECK_AUTOENCODER:
            return bottleneck_autoencoder_task(rng, n=spec.dataset_size or 512, batch_size=spec.batch_size)
        case TaskKind.UCI_CSV:
            return uci_csv_task(spec, rng)
    raise ContractError(f"Unknown task kind {spec.kind}")
