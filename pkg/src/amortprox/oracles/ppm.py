"""
Proximal point updates: the exact one by inner optimization, and the closed forms it reduces to
under second-order approximations.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from amortprox.apo.config import FsdKind
from amortprox.apo.objective import proximal_objective
from amortprox.diffnet import Batch, Model, ParamSet, forward
from amortprox.errors import ContractError, ConvergenceError, DimensionError, NumericalError, OracleScaleError
from amortprox.numkit import as_matrix, check_symmetric, solve_spd, spd_inverse
from amortprox.utils.apo_logger import logger
from amortprox.utils.config_mgr import config

PPM_MAX_PARAMS = 500
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
BB_STEP_MAX = 1e6
NONMONOTONE_MEMORY = 10
ROUNDING_SLACK = 4.0 * float(np.finfo(np.float64).eps)


def _regularized(curvature: np.ndarray, lambda_curv: float, lambda_wsd: float) -> np.ndarray:
    if lambda_curv < 0 or lambda_wsd < 0:
        raise ContractError("Discrepancy weights must be nonnegative")
    c = check_symmetric(as_matrix(curvature, "curvature"), "curvature")
    return lambda_curv * c + lambda_wsd * np.eye(c.shape[0])


def optimal_dense_precond(g_fsd: np.ndarray, lambda_fsd: float, lambda_wsd: float) -> np.ndarray:
    """``P* = (λ_FSD G + λ_WSD I)⁻¹``, the minimizer of the quadratic meta-objective."""
    return spd_inverse(_regularized(g_fsd, lambda_fsd, lambda_wsd))


def _flat_step(theta: ParamSet, g: ParamSet, matrix: np.ndarray) -> ParamSet:
    if matrix.shape[0] != theta.size:
        raise DimensionError(f"Curvature of order {matrix.shape[0]} for {theta.size} parameters")
    return theta.unflatten(theta.flatten() - solve_spd(matrix, g.flatten()))


def approx_ppm_update(
    theta: ParamSet, g: ParamSet, g_fsd: np.ndarray, lambda_fsd: float, lambda_wsd: float
) -> ParamSet:
    """``θ - (λ_FSD G + λ_WSD I)⁻¹ g``: the proximal step with a linearized loss and quadratic FSD."""
    return _flat_step(theta, g, _regularized(g_fsd, lambda_fsd, lambda_wsd))


def damped_newton_update(theta: ParamSet, g: ParamSet, hessian: np.ndarray, lambda_wsd: float) -> ParamSet:
    """``θ - (H + λ_WSD I)⁻¹ g``: the proximal step with a quadratic loss and no FSD."""
    return _flat_step(theta, g, _regularized(hessian, 1.0, lambda_wsd))


def gauss_newton_update(theta: ParamSet, g: ParamSet, ggn: np.ndarray, lambda_wsd: float) -> ParamSet:
    """Damped generalized Gauss-Newton step: the FSD term taken as the loss's own output divergence."""
    return damped_newton_update(theta, g, ggn, lambda_wsd)


def exact_ppm_solve(
    model: Model,
    theta: ParamSet,
    batch: Batch,
    lambda_fsd: float,
    lambda_wsd: float,
    fsd_data: Batch | np.ndarray | None,
    tol: float | None = None,
    *,
    fsd_kind: FsdKind = FsdKind.KL_GAUSSIAN,
    max_iters: int | None = None,
) -> ParamSet:
    """Minimize ``J_batch(u) + λ_FSD FSD(u, θ) + λ_WSD ½‖u - θ‖²`` over u, starting at θ.

    Gradient descent with Barzilai-Borwein trial steps and a nonmonotone Armijo backtracking that
    compares against the largest of the last `NONMONOTONE_MEMORY` objective values, so every
    iterate stays at or below the objective at θ.
    """
    tol = config.ppm_tol if tol is None else tol
    max_iters = config.ppm_max_iters if max_iters is None else max_iters
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    if model.num_params > PPM_MAX_PARAMS:
        raise OracleScaleError(f"Exact proximal solve over {model.num_params} parameters exceeds {PPM_MAX_PARAMS}")

    fsd_inputs = None
    reference = None
    if lambda_fsd > 0.0:
        if fsd_data is None:
            raise ContractError("FSD weight is positive but no FSD data was given")
        fsd_inputs = fsd_data.inputs if isinstance(fsd_data, Batch) else np.asarray(fsd_data, dtype=np.float64)
        reference, _ = forward(model, theta, fsd_inputs)

    def evaluate(u: ParamSet) -> tuple[float, ParamSet]:
        terms, grad = proximal_objective(
            model, u, theta, batch, fsd_inputs, lambda_fsd, lambda_wsd, fsd_kind, reference_outputs=reference
        )
        return terms.value, grad

    u = theta
    value, grad = evaluate(u)
    recent = deque([value], maxlen=NONMONOTONE_MEMORY)
    step = 1.0
    prev_u: ParamSet | None = None
    prev_grad: ParamSet | None = None
    grad_norm = float(np.sqrt(grad.sq_norm()))
    for it in range(max_iters):
        if grad_norm <= tol:
            logger.debug(f"Proximal solve converged in {it} iterations, |grad|={grad_norm:.3g}")
            return u
        if prev_u is not None and prev_grad is not None:
            s = u - prev_u
            y = grad - prev_grad
            sy = s.dot(y)
            if sy > 0.0:
                step = min(s.sq_norm() / sy, BB_STEP_MAX)
        sq = grad_norm * grad_norm
        for _ in range(MAX_BACKTRACKS):
            candidate = u.axpy(-step, grad)
            try:
                cand_value, cand_grad = evaluate(candidate)
            except NumericalError:
                step *= BACKTRACK
                continue
            ceiling = max(recent)
            # rounding slack once the decrease is below float resolution
            slack = ROUNDING_SLACK * abs(ceiling)
            if cand_value <= ceiling - ARMIJO_C * step * sq + slack:
                break
            step *= BACKTRACK
        else:
            raise ConvergenceError(
                f"Line search failed after {MAX_BACKTRACKS} backtracks at iteration {it}", last_grad_norm=grad_norm
            )
        prev_u, prev_grad = u, grad
        u, value, grad = candidate, cand_value, cand_grad
        recent.append(value)
        grad_norm = float(np.sqrt(grad.sq_norm()))

    if grad_norm <= tol:
        return u
    raise ConvergenceError(
        f"Proximal solve did not reach tol {tol:g} in {max_iters} iterations", last_grad_norm=grad_norm
    )
