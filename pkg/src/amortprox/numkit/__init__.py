from .linalg import (
    as_matrix,
    check_symmetric,
    kron_dense,
    matmul,
    rand_orthogonal,
    relative_error,
    solve_spd,
    spd_inverse,
    sym_eig,
    sym_eig_min,
    unvec_cm,
    vec_cm,
)
from .rng import Rng

__all__ = [
    "Rng",
    "as_matrix",
    "check_symmetric",
    "kron_dense",
    "matmul",
    "rand_orthogonal",
    "relative_error",
    "solve_spd",
    "spd_inverse",
    "sym_eig",
    "sym_eig_min",
    "unvec_cm",
    "vec_cm",
]
