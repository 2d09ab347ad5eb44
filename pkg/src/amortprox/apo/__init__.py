from .config import AdaptMode, BatchPolicy, FsdKind, ProximalConfig, ablation_variants
from .discrepancy import fsd, fsd_value_and_grad, rho, rho_grad, rho_hessian, wsd
from .objective import (
    LrPhi,
    MetaInputs,
    MetaParams,
    MetaState,
    ProximalTerms,
    evaluate_meta,
    init_meta_state,
    meta_gradient,
    meta_objective,
    meta_step,
    prepare_meta_inputs,
    proximal_objective,
)
from .trainer import (
    METRICS_COLUMNS,
    BatchSource,
    MetricsRow,
    TrainLog,
    apo_train,
    check_divergence,
    empty_row,
    eval_loss,
    loss_and_grad,
    wants_eval,
    warmup_optimizer,
)

__all__ = [
    "METRICS_COLUMNS",
    "AdaptMode",
    "BatchPolicy",
    "BatchSource",
    "FsdKind",
    "LrPhi",
    "MetaInputs",
    "MetaParams",
    "MetaState",
    "MetricsRow",
    "ProximalConfig",
    "ProximalTerms",
    "TrainLog",
    "ablation_variants",
    "apo_train",
    "check_divergence",
    "empty_row",
    "eval_loss",
    "evaluate_meta",
    "fsd",
    "fsd_value_and_grad",
    "init_meta_state",
    "loss_and_grad",
    "meta_gradient",
    "meta_objective",
    "meta_step",
    "prepare_meta_inputs",
    "proximal_objective",
    "rho",
    "rho_grad",
    "rho_hessian",
    "wants_eval",
    "warmup_optimizer",
    "wsd",
]
