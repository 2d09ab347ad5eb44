from .blocks import (
    KronBlocks,
    PrecondPhi,
    apply_precond,
    apply_precond_update,
    dense_precond,
    init_identity,
    precond_backward,
    precondition,
)
from .checkpoint import dump_phi, load_phi, phi_from_dict, phi_to_dict

__all__ = [
    "KronBlocks",
    "PrecondPhi",
    "apply_precond",
    "apply_precond_update",
    "dense_precond",
    "dump_phi",
    "init_identity",
    "load_phi",
    "phi_from_dict",
    "phi_to_dict",
    "precond_backward",
    "precondition",
]
