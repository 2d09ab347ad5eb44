from .curvature import (
    fd_loss_hessian,
    fsd_hessian_exact,
    ggn_matrix,
    loss_output_kind,
    output_hessian_sqrt,
    sample_output_grads,
    sampled_fisher,
)
from .kfac import (
    FisherMode,
    KfacFactors,
    KfacInstance,
    kron_blocks_from_kfac,
    kfac_blocks,
    kfac_direction,
    kfac_inverses,
    kfac_train,
    kfac_update,
    verify_kfac_recovery,
)
from .ppm import (
    approx_ppm_update,
    damped_newton_update,
    exact_ppm_solve,
    gauss_newton_update,
    optimal_dense_precond,
)
from .fdcheck import META_FD_STEP, fd_meta_gradient
from .theorem import approx_meta_gradient, approx_meta_objective, second_moment, verify_thm1

__all__ = [
    "META_FD_STEP",
    "FisherMode",
    "KfacFactors",
    "KfacInstance",
    "approx_meta_gradient",
    "approx_meta_objective",
    "approx_ppm_update",
    "damped_newton_update",
    "kron_blocks_from_kfac",
    "exact_ppm_solve",
    "fd_meta_gradient",
    "fd_loss_hessian",
    "fsd_hessian_exact",
    "gauss_newton_update",
    "ggn_matrix",
    "kfac_blocks",
    "kfac_direction",
    "kfac_inverses",
    "kfac_train",
    "kfac_update",
    "loss_output_kind",
    "optimal_dense_precond",
    "output_hessian_sqrt",
    "sample_output_grads",
    "sampled_fisher",
    "second_moment",
    "verify_kfac_recovery",
    "verify_thm1",
]
