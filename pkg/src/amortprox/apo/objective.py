"""
Proximal meta-objective.

    Q(φ) = J_B(θ'(φ)) + λ_FSD · mean_{x̃ ∈ B'} ρ(f(x̃, θ'(φ)), f(x̃, θ)) + λ_WSD · ½‖θ'(φ) - θ‖²

θ'(φ) is one step of the update rule from θ. The gradient g on B and the base optimizer state
are constants of Q; the meta-gradient flows only through the update rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from amortprox.baseopt import BaseOptKind, OptState, apply_lr_update, init_state, update_direction
from amortprox.diffnet import (
    Batch,
    Model,
    ParamSet,
    backward,
    forward,
    grad_params,
    loss_eval,
    loss_grad_outputs,
)
from amortprox.errors import ContractError, NumericalError
from amortprox.kronprecond import PrecondPhi, apply_precond_update, precond_backward

from .config import BatchPolicy, FsdKind, ProximalConfig
from .discrepancy import fsd_value_and_grad


@dataclass(frozen=True)
class LrPhi:
    """Global learning rate, meta-learned in log space so η stays positive."""

    log_lr: float
    # η as passed to from_lr; exp(log_lr) can differ from it in the last bit
    exact_lr: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.log_lr):
            raise NumericalError(f"log learning rate must be finite, got {self.log_lr}", term="log_lr")

    @classmethod
    def from_lr(cls, lr: float) -> LrPhi:
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        return cls(math.log(lr), exact_lr=float(lr))

    @property
    def lr(self) -> float:
        return self.exact_lr if self.exact_lr is not None else math.exp(self.log_lr)

    @property
    def size(self) -> int:
        return 1

    def flatten(self) -> np.ndarray:
        return np.array([self.log_lr])

    def unflatten(self, vec: np.ndarray) -> LrPhi:
        return LrPhi(float(np.asarray(vec).reshape(-1)[0]))


MetaParams = LrPhi | PrecondPhi


@dataclass(frozen=True)
class MetaState:
    opt_state: OptState
    iteration: int = 0


def init_meta_state(phi: MetaParams, cfg: ProximalConfig) -> MetaState:
    return MetaState(init_state(phi.size, cfg.meta_opt), 0)


@dataclass(frozen=True)
class ProximalTerms:
    loss: float
    fsd: float
    wsd: float
    lambda_fsd: float
    lambda_wsd: float

    @property
    def value(self) -> float:
        return self.loss + self.lambda_fsd * self.fsd + self.lambda_wsd * self.wsd


def proximal_objective(
    model: Model,
    theta_new: ParamSet,
    theta: ParamSet,
    loss_batch: Batch,
    fsd_inputs: np.ndarray | None,
    lambda_fsd: float,
    lambda_wsd: float,
    fsd_kind: FsdKind,
    reference_outputs: np.ndarray | None = None,
) -> tuple[ProximalTerms, ParamSet]:
    """Proximal objective at θ' and its gradient in θ'.

    `reference_outputs` are the outputs of θ on `fsd_inputs`; computed here when omitted.
    """
    outputs, trace = forward(model, theta_new, loss_batch.inputs)
    loss = loss_eval(model.head, outputs, loss_batch.targets)
    grad, _ = backward(model, theta_new, trace, loss_grad_outputs(model.head, outputs, loss_batch.targets))

    fsd_value = 0.0
    if lambda_fsd > 0.0:
        if fsd_inputs is None:
            raise ContractError("FSD weight is positive but no FSD inputs were given")
        if reference_outputs is None:
            reference_outputs, _ = forward(model, theta, fsd_inputs)
        fsd_value, fsd_grad = fsd_value_and_grad(model, theta_new, reference_outputs, fsd_inputs, fsd_kind)
        grad = grad.axpy(lambda_fsd, fsd_grad)

    diff = theta_new - theta
    wsd_value = 0.5 * diff.sq_norm()
    if lambda_wsd > 0.0:
        grad = grad.axpy(lambda_wsd, diff)

    terms = ProximalTerms(loss, fsd_value, wsd_value, lambda_fsd, lambda_wsd)
    for name, val in (("loss", loss), ("fsd", fsd_value), ("wsd", wsd_value)):
        if not math.isfinite(val):
            raise NumericalError(f"Non-finite {name} term in the proximal objective", term=name)
    return terms, grad


@dataclass(frozen=True)
class MetaInputs:
    """Everything Q holds fixed for one meta-step."""

    theta: ParamSet
    grad: ParamSet
    # LR mode only: the base optimizer direction from the pre-step state
    direction: ParamSet | None
    loss_batch: Batch
    fsd_inputs: np.ndarray | None


def prepare_meta_inputs(
    model: Model,
    theta: ParamSet,
    phi: MetaParams,
    opt_state: OptState | None,
    batch_b: Batch,
    batch_bp: Batch,
    cfg: ProximalConfig,
    *,
    base: BaseOptKind | None = None,
    grad: ParamSet | None = None,
    direction: ParamSet | None = None,
    loss_batch: Batch | None = None,
) -> MetaInputs:
    if grad is None:
        grad = grad_params(model, theta, batch_b)
    if isinstance(phi, LrPhi) and direction is None:
        kind = base or BaseOptKind.sgd()
        state = opt_state if opt_state is not None else init_state(theta.size, kind)
        flat, _ = update_direction(kind, state, grad.flatten())
        direction = theta.unflatten(flat)

    if cfg.loss_batch_policy == BatchPolicy.SAME:
        loss_batch = batch_b
    elif loss_batch is None:
        raise ContractError("loss_batch_policy=fresh needs an independently sampled loss batch")

    fsd_batch = batch_bp if cfg.fsd_batch_policy == BatchPolicy.FRESH else batch_b
    fsd_inputs = fsd_batch.inputs if cfg.lambda_fsd > 0.0 else None
    return MetaInputs(theta, grad, direction, loss_batch, fsd_inputs)


def _step(phi: MetaParams, inputs: MetaInputs) -> ParamSet:
    if isinstance(phi, LrPhi):
        assert inputs.direction is not None
        return apply_lr_update(inputs.theta, phi.lr, inputs.direction)
    return apply_precond_update(inputs.theta, phi, inputs.grad)


def evaluate_meta(
    model: Model, phi: MetaParams, inputs: MetaInputs, cfg: ProximalConfig, *, with_grad: bool
) -> tuple[ProximalTerms, MetaParams | None]:
    theta_new = _step(phi, inputs)
    terms, grad_theta_new = proximal_objective(
        model,
        theta_new,
        inputs.theta,
        inputs.loss_batch,
        inputs.fsd_inputs,
        cfg.lambda_fsd,
        cfg.lambda_wsd,
        cfg.divergence,
    )
    if not math.isfinite(terms.value):
        raise NumericalError("Non-finite meta-objective", term="meta_objective")
    if not with_grad:
        return terms, None

    meta_grad: MetaParams
    if isinstance(phi, LrPhi):
        assert inputs.direction is not None
        # θ' = θ - exp(s) Δ  =>  dQ/ds = -η <∇_θ' Q, Δ>
        meta_grad = LrPhi(-phi.lr * grad_theta_new.dot(inputs.direction))
    else:
        meta_grad = precond_backward(phi, inputs.grad, grad_theta_new)
    if not np.all(np.isfinite(meta_grad.flatten())):
        raise NumericalError("Non-finite meta-gradient", term="meta_gradient")
    return terms, meta_grad


def meta_objective(
    model: Model,
    theta: ParamSet,
    phi: MetaParams,
    opt_state: OptState | None,
    batch_b: Batch,
    batch_bp: Batch,
    cfg: ProximalConfig,
    *,
    base: BaseOptKind | None = None,
    grad: ParamSet | None = None,
    loss_batch: Batch | None = None,
) -> float:
    inputs = prepare_meta_inputs(
        model, theta, phi, opt_state, batch_b, batch_bp, cfg, base=base, grad=grad, loss_batch=loss_batch
    )
    terms, _ = evaluate_meta(model, phi, inputs, cfg, with_grad=False)
    return terms.value


def meta_gradient(
    model: Model,
    theta: ParamSet,
    phi: MetaParams,
    opt_state: OptState | None,
    batch_b: Batch,
    batch_bp: Batch,
    cfg: ProximalConfig,
    *,
    base: BaseOptKind | None = None,
    grad: ParamSet | None = None,
    loss_batch: Batch | None = None,
) -> MetaParams:
    """∇_φ Q with the gradient and optimizer state held constant.

    For LrPhi the returned ``log_lr`` field is dQ/d(log η).
    """
    inputs = prepare_meta_inputs(
        model, theta, phi, opt_state, batch_b, batch_bp, cfg, base=base, grad=grad, loss_batch=loss_batch
    )
    _, grad = evaluate_meta(model, phi, inputs, cfg, with_grad=True)
    assert grad is not None
    return grad


def meta_step(
    phi: MetaParams, meta_state: MetaState, meta_grad: MetaParams, cfg: ProximalConfig
) -> tuple[MetaParams, MetaState]:
    """One meta-optimizer step on φ in its native parameterization."""
    direction, opt_state = update_direction(cfg.meta_opt, meta_state.opt_state, meta_grad.flatten())
    new_phi = phi.unflatten(phi.flatten() - cfg.meta_lr * direction)
    return new_phi, MetaState(opt_state, meta_state.iteration + 1)
