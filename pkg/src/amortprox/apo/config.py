from __future__ import annotations

from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field

from amortprox.baseopt import BaseOptKind
from amortprox.utils.config_mgr import config


class FsdKind(StrEnum):
    KL_CATEGORICAL = "kl-categorical"
    # ½‖Δy‖²
    KL_GAUSSIAN = "kl-gaussian-unit-variance"
    # ‖Δy‖²
    SQUARED = "squared-output-distance"


class BatchPolicy(StrEnum):
    SAME = "same"
    FRESH = "fresh"


class AdaptMode(StrEnum):
    NONE = "none"
    APO_LR = "apo-lr"
    APO_PRECOND = "apo-precond"
    KFAC = "kfac"


class ProximalConfig(BaseModel):
    """Weights of the proximal meta-objective and the meta-optimization schedule."""

    model_config = ConfigDict(extra="forbid")

    lambda_fsd: float = Field(default_factory=lambda: config.lambda_fsd, ge=0.0)
    lambda_wsd: float = Field(default_factory=lambda: config.lambda_wsd, ge=0.0)
    # None: the task's own divergence, unit-variance Gaussian KL outside a task
    fsd_kind: FsdKind | None = None
    meta_interval: int = Field(default_factory=lambda: config.meta_interval, ge=1)
    meta_lr: float = Field(default_factory=lambda: config.lr_meta_lr, gt=0.0)
    meta_opt: BaseOptKind = Field(default_factory=BaseOptKind.rmsprop)
    warmup_steps: int = Field(default=0, ge=0)
    loss_batch_policy: BatchPolicy = BatchPolicy.SAME
    fsd_batch_policy: BatchPolicy = BatchPolicy.FRESH
    # None: the base learning rate, so the identity initialization starts as the base SGD step
    scale: float | None = Field(default=None, gt=0.0)
    # None: same size as the base batch
    fsd_batch_size: int | None = Field(default=None, ge=1)

    @property
    def divergence(self) -> FsdKind:
        return self.fsd_kind or FsdKind.KL_GAUSSIAN

    def with_task_divergence(self, kind: FsdKind) -> ProximalConfig:
        return self if self.fsd_kind is not None else self.model_copy(update={"fsd_kind": kind})

    @classmethod
    def for_lr(cls, **overrides: object) -> ProximalConfig:
        """Learning-rate adaptation defaults: RMSprop meta-optimizer, meta-LR 0.1, K=10."""
        base = {"meta_lr": config.lr_meta_lr, "meta_opt": BaseOptKind.rmsprop()}
        return cls.model_validate(base | overrides)

    @classmethod
    def for_precond(cls, **overrides: object) -> ProximalConfig:
        """Preconditioner adaptation defaults: Adam meta-optimizer, meta-LR 1e-4, SGDm warm-up."""
        base = {
            "meta_lr": config.precond_meta_lr,
            "meta_opt": BaseOptKind.adam(),
            "warmup_steps": config.precond_warmup_steps,
        }
        return cls.model_validate(base | overrides)


def _toggle(policy: BatchPolicy) -> BatchPolicy:
    return BatchPolicy.FRESH if policy == BatchPolicy.SAME else BatchPolicy.SAME


def ablation_variants(cfg: ProximalConfig, *, loss_batch: bool = True, fsd_batch: bool = False) -> ProximalConfig:
    """Flip the loss-term and/or FSD-term batch policy.

    A fresh batch for the loss term gives the greedy one-step objective that suffers from
    short-horizon bias; the same batch for the FSD term gives a biased FSD estimate.
    """
    update: dict[str, BatchPolicy] = {}
    if loss_batch:
        update["loss_batch_policy"] = _toggle(cfg.loss_batch_policy)
    if fsd_batch:
        update["fsd_batch_policy"] = _toggle(cfg.fsd_batch_policy)
    return cfg.model_copy(update=update)
