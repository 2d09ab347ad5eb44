"""
Base optimizer directions.

Every optimizer here produces an unscaled direction Δ such that the step is ``θ' = θ - η Δ``.
They operate on flat vectors, so the same code drives the parameter update (on
``ParamSet.flatten()``) and the meta-optimizer over φ. Accumulators are plain data; the
meta-gradient treats them as constants and never differentiates through `update_direction`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from amortprox.diffnet import ParamSet
from amortprox.errors import DimensionError, NumericalError


class OptName(StrEnum):
    SGD = "sgd"
    MOMENTUM = "sgd-momentum"
    RMSPROP = "rmsprop"
    ADAM = "adam"


class BaseOptKind(BaseModel):
    """Optimizer family and its hyperparameters (not the learning rate)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: OptName = OptName.SGD
    beta: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)

    @classmethod
    def sgd(cls) -> BaseOptKind:
        return cls(name=OptName.SGD)

    @classmethod
    def momentum(cls, beta: float = 0.9) -> BaseOptKind:
        return cls(name=OptName.MOMENTUM, beta=beta)

    @classmethod
    def rmsprop(cls, beta2: float = 0.99, eps: float = 1e-8) -> BaseOptKind:
        return cls(name=OptName.RMSPROP, beta2=beta2, eps=eps)

    @classmethod
    def adam(cls, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> BaseOptKind:
        return cls(name=OptName.ADAM, beta=beta1, beta2=beta2, eps=eps)


class BaseOptSpec(BaseModel):
    """A base optimizer as configured for an experiment."""

    model_config = ConfigDict(extra="forbid")

    kind: BaseOptKind = Field(default_factory=BaseOptKind.sgd)
    lr: float = Field(default=0.1, gt=0.0)
    weight_decay: float = Field(default=0.0, ge=0.0)


@dataclass(frozen=True)
class OptState:
    momentum: np.ndarray | None = None
    second_moment: np.ndarray | None = None
    step: int = 0


def init_state(size: int, kind: BaseOptKind) -> OptState:
    momentum = np.zeros(size) if kind.name in (OptName.MOMENTUM, OptName.ADAM) else None
    second = np.zeros(size) if kind.name in (OptName.RMSPROP, OptName.ADAM) else None
    return OptState(momentum=momentum, second_moment=second, step=0)


def update_direction(kind: BaseOptKind, state: OptState, g: np.ndarray) -> tuple[np.ndarray, OptState]:
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericalError("Non-finite gradient passed to the base optimizer", term="gradient")
    for buf in (state.momentum, state.second_moment):
        if buf is not None and buf.shape != g.shape:
            raise DimensionError(f"Optimizer state has shape {buf.shape}, gradient {g.shape}")

    step = state.step + 1
    match kind.name:
        case OptName.SGD:
            return g.copy(), replace(state, step=step)
        case OptName.MOMENTUM:
            buf = g.copy() if state.momentum is None else kind.beta * state.momentum + g
            return buf.copy(), replace(state, momentum=buf, step=step)
        case OptName.RMSPROP:
            prev = np.zeros_like(g) if state.second_moment is None else state.second_moment
            v = kind.beta2 * prev + (1.0 - kind.beta2) * g * g
            return g / (np.sqrt(v) + kind.eps), replace(state, second_moment=v, step=step)
        case OptName.ADAM:
            m_prev = np.zeros_like(g) if state.momentum is None else state.momentum
            v_prev = np.zeros_like(g) if state.second_moment is None else state.second_moment
            m = kind.beta * m_prev + (1.0 - kind.beta) * g
            v = kind.beta2 * v_prev + (1.0 - kind.beta2) * g * g
            m_hat = m / (1.0 - kind.beta**step)
            v_hat = v / (1.0 - kind.beta2**step)
            direction = m_hat / (np.sqrt(v_hat) + kind.eps)
            return direction, replace(state, momentum=m, second_moment=v, step=step)
    raise NumericalError(f"Unknown optimizer {kind.name}")


def apply_lr_update(theta: ParamSet, lr: float, direction: ParamSet) -> ParamSet:
    """``θ' = θ - η Δ``."""
    return theta.axpy(-lr, direction)


def add_weight_decay(g: ParamSet, theta: ParamSet, weight_decay: float) -> ParamSet:
    """Coupled weight decay: ``g + λ_WD θ``."""
    if weight_decay == 0.0:
        return g
    return g.axpy(weight_decay, theta)
