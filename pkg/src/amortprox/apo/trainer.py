"""
APO training loop.

Every step samples a batch B and takes a parameter step. On every K-th step (1-based) a fresh
batch B' is drawn first, the meta-objective and its gradient are computed at the current θ, and
φ takes one meta-optimizer step before θ is updated with the new φ.

Base batches and meta batches come from separate child streams of the run's Rng, so enabling
meta-updates never changes which base batches are drawn.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Protocol, TypedDict

import numpy as np

from amortprox.baseopt import (
    BaseOptKind,
    BaseOptSpec,
    OptName,
    OptState,
    add_weight_decay,
    apply_lr_update,
    init_state,
    update_direction,
)
from amortprox.diffnet import Batch, Model, ParamSet, backward, forward, loss_eval, loss_grad_outputs
from amortprox.errors import ContractError, NumericalError, TrainingDivergedError
from amortprox.kronprecond import PrecondPhi, apply_precond_update, init_identity
from amortprox.numkit import Rng
from amortprox.utils.apo_logger import logger
from amortprox.utils.config_mgr import config

from .config import AdaptMode, BatchPolicy, ProximalConfig
from .objective import LrPhi, MetaParams, evaluate_meta, init_meta_state, meta_step, prepare_meta_inputs

METRICS_COLUMNS = (
    "step",
    "train_loss",
    "eval_loss",
    "meta_objective",
    "lr",
    "phi_frobenius_norm",
    "fsd_term",
    "wsd_term",
    "wallclock_ms",
)

BASE_STREAM = 0
META_STREAM = 1


class MetricsRow(TypedDict):
    step: int
    train_loss: float
    eval_loss: float | None
    meta_objective: float | None
    lr: float | None
    phi_frobenius_norm: float | None
    fsd_term: float | None
    wsd_term: float | None
    wallclock_ms: float | None


class BatchSource(Protocol):
    """What the training loops need from a task."""

    @property
    def batch_size(self) -> int: ...

    @property
    def holdout(self) -> Batch | None: ...

    def sample(self, rng: Rng, size: int | None = None) -> Batch: ...


@dataclass
class TrainLog:
    rows: list[MetricsRow] = field(default_factory=list)
    theta: ParamSet | None = None
    phi: MetaParams | None = None

    def column(self, name: str) -> np.ndarray:
        """One metrics column as floats, NaN where the value is absent."""
        values = [row.get(name) for row in self.rows]
        return np.array([np.nan if v is None else v for v in values], dtype=np.float64)

    @property
    def final_loss(self) -> float:
        if not self.rows:
            raise ContractError("Empty training log")
        return float(self.rows[-1]["train_loss"])


def empty_row(step: int, train_loss: float) -> MetricsRow:
    return MetricsRow(
        step=step,
        train_loss=train_loss,
        eval_loss=None,
        meta_objective=None,
        lr=None,
        phi_frobenius_norm=None,
        fsd_term=None,
        wsd_term=None,
        wallclock_ms=None,
    )


def check_divergence(loss: float, step: int, log: TrainLog) -> None:
    """Raise TrainingDivergedError when the loss is non-finite or above the guard threshold."""
    if not math.isfinite(loss) or loss > config.divergence_threshold:
        logger.error(f"Training diverged at step {step} (loss={loss})")
        raise TrainingDivergedError(f"Training diverged at step {step}: loss {loss}", step=step, log=log)


def loss_and_grad(model: Model, theta: ParamSet, batch: Batch) -> tuple[float, ParamSet]:
    outputs, trace = forward(model, theta, batch.inputs)
    loss = loss_eval(model.head, outputs, batch.targets)
    grad, _ = backward(model, theta, trace, loss_grad_outputs(model.head, outputs, batch.targets))
    return loss, grad


def eval_loss(model: Model, theta: ParamSet, batch: Batch) -> float:
    outputs, _ = forward(model, theta, batch.inputs)
    return loss_eval(model.head, outputs, batch.targets)


def wants_eval(step: int, steps: int) -> bool:
    return step % config.eval_interval == 0 or step == steps


def warmup_optimizer(base: BaseOptSpec) -> BaseOptKind:
    """SGD with the base optimizer's momentum when it has one, else `warmup_momentum`."""
    if base.kind.name == OptName.MOMENTUM:
        return base.kind
    return BaseOptKind.momentum(config.warmup_momentum)


def initial_phi(model: Model, mode: AdaptMode, base: BaseOptSpec, cfg: ProximalConfig) -> MetaParams | None:
    match mode:
        case AdaptMode.NONE:
            return None
        case AdaptMode.APO_LR:
            return LrPhi.from_lr(base.lr)
        case AdaptMode.APO_PRECOND:
            return init_identity(model, cfg.scale if cfg.scale is not None else base.lr)
    raise ContractError(f"apo_train does not run mode {mode}")


def apo_train(
    model: Model,
    theta0: ParamSet,
    cfg: ProximalConfig,
    task: BatchSource,
    steps: int,
    rng: Rng,
    *,
    base: BaseOptSpec | None = None,
    mode: AdaptMode = AdaptMode.APO_LR,
    phi0: MetaParams | None = None,
) -> TrainLog:
    """Train θ with the base optimizer, adapting φ through the proximal meta-objective.

    In ``none`` mode φ is absent and this is plain base-optimizer training with a fixed η.
    ``apo-lr`` meta-learns log η of the base optimizer. ``apo-precond`` steps θ with
    ``θ - c P_S g`` after the warm-up; during the warm-up θ follows SGD with momentum at the base
    learning rate while φ is meta-learned all the same.
    """
    if steps < 1:
        raise ContractError(f"steps must be at least 1, got {steps}")
    base = base or BaseOptSpec()
    theta0.check_model(model)
    phi = phi0 if phi0 is not None else initial_phi(model, mode, base, cfg)
    if mode == AdaptMode.APO_LR and not isinstance(phi, LrPhi):
        raise ContractError("apo-lr needs a learning-rate meta-parameter")
    if mode == AdaptMode.APO_PRECOND and not isinstance(phi, PrecondPhi):
        raise ContractError("apo-precond needs a preconditioner meta-parameter")

    base_rng = rng.child(BASE_STREAM)
    meta_rng = rng.child(META_STREAM)
    theta = theta0
    opt_state: OptState = init_state(theta.size, base.kind)
    warmup_kind = warmup_optimizer(base)
    warmup_state: OptState = init_state(theta.size, warmup_kind)
    meta_state = init_meta_state(phi, cfg) if phi is not None else None
    log = TrainLog(theta=theta, phi=phi)
    holdout = task.holdout
    started = time.perf_counter()

    logger.info(f"Training {steps} steps, mode={mode}, base={base.kind.name}, params={theta.size}")
    for step in range(1, steps + 1):
        batch = task.sample(base_rng)
        try:
            loss, grad = loss_and_grad(model, theta, batch)
        except NumericalError as e:
            log.theta = theta
            raise TrainingDivergedError(f"Training diverged at step {step}: {e}", step=step, log=log) from e
        check_divergence(loss, step, log)
        grad = add_weight_decay(grad, theta, base.weight_decay)
        row = empty_row(step, loss)

        try:
            direction: ParamSet | None = None
            next_state = opt_state
            if mode in (AdaptMode.NONE, AdaptMode.APO_LR):
                flat, next_state = update_direction(base.kind, opt_state, grad.flatten())
                direction = theta.unflatten(flat)

            if phi is not None and meta_state is not None and step % cfg.meta_interval == 0:
                fsd_size = cfg.fsd_batch_size or task.batch_size
                batch_bp = task.sample(meta_rng, fsd_size)
                loss_batch = task.sample(meta_rng) if cfg.loss_batch_policy == BatchPolicy.FRESH else None
                inputs = prepare_meta_inputs(
                    model,
                    theta,
                    phi,
                    opt_state,
                    batch,
                    batch_bp,
                    cfg,
                    base=base.kind,
                    grad=grad,
                    direction=direction,
                    loss_batch=loss_batch,
                )
                terms, meta_grad = evaluate_meta(model, phi, inputs, cfg, with_grad=True)
                assert meta_grad is not None
                phi, meta_state = meta_step(phi, meta_state, meta_grad, cfg)
                row["meta_objective"] = terms.value
                row["fsd_term"] = terms.fsd
                row["wsd_term"] = terms.wsd
                logger.debug(f"step {step}: meta-update #{meta_state.iteration}, Q={terms.value:.6g}")

            if isinstance(phi, PrecondPhi):
                if step <= cfg.warmup_steps:
                    flat, warmup_state = update_direction(warmup_kind, warmup_state, grad.flatten())
                    theta = apply_lr_update(theta, base.lr, theta.unflatten(flat))
                else:
                    theta = apply_precond_update(theta, phi, grad)
                row["phi_frobenius_norm"] = phi.frobenius_norm()
            else:
                assert direction is not None
                lr = phi.lr if isinstance(phi, LrPhi) else base.lr
                theta = apply_lr_update(theta, lr, direction)
                opt_state = next_state
                row["lr"] = lr

            if not theta.is_finite():
                raise NumericalError("Parameter step produced non-finite values", term="theta")
            if holdout is not None and wants_eval(step, steps):
                row["eval_loss"] = eval_loss(model, theta, holdout)
        except NumericalError as e:
            log.theta = theta
            log.phi = phi
            logger.error(f"Training diverged at step {step}: {e}")
            raise TrainingDivergedError(f"Training diverged at step {step}: {e}", step=step, log=log) from e

        if config.record_wallclock:
            row["wallclock_ms"] = (time.perf_counter() - started) * 1000.0
        log.rows.append(row)

    log.theta = theta
    log.phi = phi
    logger.info(f"Finished {steps} steps, final batch loss {log.final_loss:.6g}")
    return log
