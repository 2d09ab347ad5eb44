from .optimizers import (
    BaseOptKind,
    BaseOptSpec,
    OptName,
    OptState,
    add_weight_decay,
    apply_lr_update,
    init_state,
    update_direction,
)

__all__ = [
    "BaseOptKind",
    "BaseOptSpec",
    "OptName",
    "OptState",
    "add_weight_decay",
    "apply_lr_update",
    "init_state",
    "update_direction",
]
