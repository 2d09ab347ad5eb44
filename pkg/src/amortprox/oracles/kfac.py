"""
Kronecker-factored curvature.

Per layer, ``A_kfac = E[ā āᵀ]`` over the layer inputs (with a trailing 1 when the layer has a bias)
and ``B_kfac = E[Ds Dsᵀ]`` over pre-activation gradients of the predictive NLL. A weight stored
fan_in x fan_out is column-stacked, so the layer's Fisher is approximated by
``kron(B_kfac, A_kfac)`` and its damped inverse acts as ``(A + γI)⁻¹ Ḡ (B + γI)⁻¹``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from amortprox.apo.config import FsdKind
from amortprox.apo.trainer import (
    BASE_STREAM,
    BatchSource,
    TrainLog,
    check_divergence,
    empty_row,
    eval_loss,
    loss_and_grad,
    wants_eval,
)
from amortprox.diffnet import Batch, Head, LayerSpec, Model, ParamSet, backward, forward
from amortprox.errors import ContractError, NumericalError, TrainingDivergedError
from amortprox.kronprecond import KronBlocks, dense_precond
from amortprox.numkit import Rng, check_symmetric, kron_dense, relative_error, solve_spd, spd_inverse, sym_eig
from amortprox.utils.apo_logger import logger
from amortprox.utils.config_mgr import config
from amortprox.utils.report import CheckResult, Report, check_result, summarize_checks

from .curvature import fsd_hessian_exact, output_hessian_sqrt, sample_output_grads
from .ppm import optimal_dense_precond

FISHER_STREAM = 2
RECOVERY_TOL = 1e-6
RECOVERY_MAX_DIM = 16


class FisherMode(StrEnum):
    # one target per example from the model's predictive
    SAMPLED = "sampled"
    # square-root factor of the output Hessian, no sampling
    EXACT = "exact"


@dataclass(frozen=True)
class KfacFactors:
    a: np.ndarray
    b: np.ndarray


def _homogeneous(a: np.ndarray, layer: LayerSpec) -> np.ndarray:
    if not layer.has_bias:
        return a
    return np.hstack([a, np.ones((a.shape[0], 1))])


def kfac_blocks(
    model: Model,
    theta: ParamSet,
    data: Batch | np.ndarray,
    rng: Rng | None = None,
    *,
    mode: FisherMode = FisherMode.SAMPLED,
    output_precision: np.ndarray | None = None,
) -> list[KfacFactors]:
    """Per-layer Kronecker factors estimated on the given inputs."""
    inputs = data.inputs if isinstance(data, Batch) else np.asarray(data, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ContractError("KFAC statistics need a non-empty dataset")
    n = inputs.shape[0]
    outputs, trace = forward(model, theta, inputs)

    b_stats = [np.zeros((layer.fan_out, layer.fan_out)) for layer in model.layers]
    if mode == FisherMode.SAMPLED:
        if rng is None:
            raise ContractError("Sampled KFAC statistics need an Rng")
        _, deltas = backward(model, theta, trace, sample_output_grads(model.head, outputs, rng, output_precision))
        for i, ds in enumerate(deltas):
            b_stats[i] += ds.T @ ds
    else:
        roots = output_hessian_sqrt(model.head, outputs, output_precision)
        for k in range(roots.shape[2]):
            _, deltas = backward(model, theta, trace, roots[:, :, k])
            for i, ds in enumerate(deltas):
                b_stats[i] += ds.T @ ds

    factors = []
    for i, layer in enumerate(model.layers):
        a_bar = _homogeneous(trace.activations[i], layer)
        a_stat = check_symmetric(a_bar.T @ a_bar / n, "A_kfac")
        b_stat = check_symmetric(b_stats[i] / n, "B_kfac")
        factors.append(KfacFactors(a_stat, b_stat))
    return factors


def kfac_inverses(factors: list[KfacFactors], damping: float) -> list[KfacFactors]:
    """Damped inverses ``(A + γI)⁻¹``, ``(B + γI)⁻¹``."""
    if damping < 0:
        raise ContractError(f"damping must be nonnegative, got {damping}")
    return [
        KfacFactors(
            spd_inverse(f.a + damping * np.eye(f.a.shape[0])),
            spd_inverse(f.b + damping * np.eye(f.b.shape[0])),
        )
        for f in factors
    ]


def _stack(gw: np.ndarray, gb: np.ndarray | None) -> np.ndarray:
    return gw if gb is None else np.vstack([gw, gb[None, :]])


def kfac_direction(g: ParamSet, inverses: list[KfacFactors]) -> ParamSet:
    weights = []
    biases: list[np.ndarray | None] = []
    for (gw, gb), inv in zip(g, inverses):
        step = inv.a @ _stack(gw, gb) @ inv.b
        weights.append(step[: gw.shape[0]])
        biases.append(None if gb is None else step[gw.shape[0]])
    return ParamSet(tuple(weights), tuple(biases))


def kfac_update(theta: ParamSet, g: ParamSet, factors: list[KfacFactors], damping: float, lr: float) -> ParamSet:
    """``W' = W - η (A + γI)⁻¹ Ḡ (B + γI)⁻¹`` per layer, bias as the homogeneous row."""
    if damping <= 0:
        raise ContractError(f"damping must be positive, got {damping}")
    weights = []
    biases: list[np.ndarray | None] = []
    for (w, b), (gw, gb), f in zip(theta, g, factors):
        stacked = _stack(gw, gb)
        left = solve_spd(f.a + damping * np.eye(f.a.shape[0]), stacked)
        step = solve_spd(f.b + damping * np.eye(f.b.shape[0]), left.T).T
        weights.append(w - lr * step[: w.shape[0]])
        biases.append(None if b is None else b - lr * step[w.shape[0]])
    return ParamSet(tuple(weights), tuple(biases))


def _ema(old: list[KfacFactors] | None, new: list[KfacFactors], decay: float) -> list[KfacFactors]:
    if old is None:
        return new
    return [
        KfacFactors(decay * o.a + (1.0 - decay) * n.a, decay * o.b + (1.0 - decay) * n.b) for o, n in zip(old, new)
    ]


def stats_decay(step: int, ema_decay: float) -> float:
    """Plain running mean over the first steps, then the EMA decay."""
    return min(ema_decay, 1.0 - 1.0 / step)


def kfac_train(
    model: Model,
    theta0: ParamSet,
    task: BatchSource,
    steps: int,
    rng: Rng,
    *,
    lr: float,
    damping: float = 1e-2,
    ema_decay: float = 0.95,
    refresh_interval: int = 10,
    cold_steps: int = 10,
    cold_lr: float | None = None,
) -> TrainLog:
    """KFAC baseline: factors tracked by EMA every step, damped inverses refreshed periodically.

    The first `cold_steps` steps take plain SGD steps at `cold_lr` (default `lr`) while the
    factor statistics accumulate; a single batch gives near-singular factors once the batch is
    no larger than a layer's width. Batches come from the same stream as `apo_train`, so both
    see identical data for one seed.
    """
    if steps < 1:
        raise ContractError(f"steps must be at least 1, got {steps}")
    if refresh_interval < 1:
        raise ContractError(f"refresh_interval must be at least 1, got {refresh_interval}")
    if damping <= 0:
        raise ContractError(f"damping must be positive, got {damping}")
    if cold_steps < 0:
        raise ContractError(f"cold_steps must be nonnegative, got {cold_steps}")
    sgd_lr = lr if cold_lr is None else cold_lr
    base_rng = rng.child(BASE_STREAM)
    fisher_rng = rng.child(FISHER_STREAM)
    theta = theta0
    stats: list[KfacFactors] | None = None
    inverses: list[KfacFactors] | None = None
    log = TrainLog(theta=theta)
    holdout = task.holdout
    started = time.perf_counter()

    logger.info(f"KFAC training {steps} steps, lr={lr:g}, damping={damping:g}, cold steps={cold_steps}")
    for step in range(1, steps + 1):
        batch = task.sample(base_rng)
        try:
            loss, grad = loss_and_grad(model, theta, batch)
            check_divergence(loss, step, log)
            row = empty_row(step, loss)
            stats = _ema(stats, kfac_blocks(model, theta, batch, fisher_rng), stats_decay(step, ema_decay))
            if step <= cold_steps:
                theta = theta.axpy(-sgd_lr, grad)
                row["lr"] = sgd_lr
            else:
                if inverses is None or (step - cold_steps - 1) % refresh_interval == 0:
                    inverses = kfac_inverses(stats, damping)
                theta = theta.axpy(-lr, kfac_direction(grad, inverses))
                row["lr"] = lr
            if not theta.is_finite():
                raise NumericalError("KFAC step produced non-finite values", term="theta")
            if holdout is not None and wants_eval(step, steps):
                row["eval_loss"] = eval_loss(model, theta, holdout)
        except NumericalError as e:
            log.theta = theta
            logger.error(f"KFAC training diverged at step {step}: {e}")
            raise TrainingDivergedError(f"Training diverged at step {step}: {e}", step=step, log=log) from e
        if config.record_wallclock:
            row["wallclock_ms"] = (time.perf_counter() - started) * 1000.0
        log.rows.append(row)

    log.theta = theta
    return log


@dataclass(frozen=True)
class KfacInstance:
    """A single bias-free linear layer whose KFAC assumptions hold exactly.

    Inputs are the scaled columns of a square root of `input_moment`, so their second moment is
    exact; the Gaussian output precision fixes the output-side factor independently of the input.
    """

    name: str
    input_moment: np.ndarray
    output_precision: np.ndarray

    @property
    def model(self) -> Model:
        n_in = self.input_moment.shape[0]
        n_out = self.output_precision.shape[0]
        return Model((LayerSpec(n_in, n_out, has_bias=False),), Head.REGRESSION)

    def inputs(self) -> np.ndarray:
        n = self.input_moment.shape[0]
        try:
            root = np.linalg.cholesky(self.input_moment)
        except np.linalg.LinAlgError as e:
            raise ContractError(f"Instance {self.name}: input moment is not positive definite") from e
        return np.sqrt(n) * root.T

    @classmethod
    def identity(cls, n_in: int = 2, n_out: int = 2) -> KfacInstance:
        return cls("identity", np.eye(n_in), np.eye(n_out))

    @classmethod
    def diagonal(cls) -> KfacInstance:
        return cls("diagonal", np.diag([1.0, 2.0]), np.array([[3.0]]))

    @classmethod
    def random(cls, rng: Rng, n_in: int = 3, n_out: int = 2) -> KfacInstance:
        def spd(k: int) -> np.ndarray:
            x = rng.normal((k, k))
            return x @ x.T + k * np.eye(k)

        return cls("random", spd(n_in), spd(n_out))


def kron_blocks_from_kfac(a_kfac: np.ndarray, b_kfac: np.ndarray) -> KronBlocks:
    """Blocks with ``P_S = kron(B_kfac⁻¹, A_kfac⁻¹)``: eigenvectors as A and B, inverse root eigenvalues in S."""
    lam_a, vec_a = sym_eig(a_kfac)
    lam_b, vec_b = sym_eig(b_kfac)
    if lam_a[0] <= 0 or lam_b[0] <= 0:
        raise NumericalError("KFAC factors must be positive definite to invert", term="kfac_blocks")
    s = 1.0 / np.sqrt(np.outer(lam_a, lam_b))
    return KronBlocks(vec_b, vec_a, s)


def verify_kfac_recovery(instance: KfacInstance, rng: Rng | None = None) -> Report:
    """The optimal dense preconditioner with KL FSD, λ_FSD=1 and λ_WSD=0 is the inverse KFAC matrix."""
    model = instance.model
    n_in, n_out = model.layers[0].fan_in, model.layers[0].fan_out
    if n_in * n_out > RECOVERY_MAX_DIM:
        raise ContractError(f"Instance {instance.name} has {n_in * n_out} parameters, limit {RECOVERY_MAX_DIM}")
    rng = rng or Rng(0)
    weight = rng.normal((n_in, n_out))
    theta = ParamSet((weight,), (None,))
    inputs = instance.inputs()

    factors = kfac_blocks(model, theta, inputs, mode=FisherMode.EXACT, output_precision=instance.output_precision)[0]
    if relative_error(factors.a, instance.input_moment) > RECOVERY_TOL:
        raise ContractError(f"Instance {instance.name}: input statistics were not reproduced")

    g_fsd = fsd_hessian_exact(model, theta, inputs, FsdKind.KL_GAUSSIAN, instance.output_precision)
    p_star = optimal_dense_precond(g_fsd, 1.0, 0.0)
    kfac_inv = kron_dense(spd_inverse(factors.b), spd_inverse(factors.a))
    p_blocks = dense_precond(kron_blocks_from_kfac(factors.a, factors.b))

    fisher_err = relative_error(kron_dense(factors.b, factors.a), g_fsd)
    recovery_err = relative_error(p_star, kfac_inv)
    blocks_err = relative_error(p_blocks, kfac_inv)
    prefix = f"kfac_{instance.name}"
    checks: list[CheckResult] = [
        check_result(f"{prefix}_fisher_is_kronecker", fisher_err, RECOVERY_TOL, fisher_err <= RECOVERY_TOL),
        check_result(f"{prefix}_thm1_equals_kfac_inverse", recovery_err, RECOVERY_TOL, recovery_err <= RECOVERY_TOL),
        check_result(f"{prefix}_blocks_reproduce_inverse", blocks_err, RECOVERY_TOL, blocks_err <= RECOVERY_TOL),
    ]
    return summarize_checks(checks)
