"""
Quadratic meta-objective over dense preconditioners.

With the loss linearized and the FSD taken to second order, the expected meta-objective of
``θ' = θ - P g`` is, up to constants,

    Q̂(P) = -tr(P Σ) + ½ λ_FSD tr(Pᵀ G P Σ) + ½ λ_WSD tr(Pᵀ P Σ),     Σ = E[g gᵀ]

whose gradient ``(λ_FSD G + λ_WSD I) P Σ - Σ`` vanishes at ``P* = (λ_FSD G + λ_WSD I)⁻¹``.
"""

from __future__ import annotations

import numpy as np

from amortprox.errors import ContractError
from amortprox.numkit import Rng, as_matrix, check_symmetric, sym_eig_min
from amortprox.utils.report import CheckResult, Report, check_result, summarize_checks

from .ppm import optimal_dense_precond

THM1_MAX_DIM = 12
GRADIENT_TOL = 1e-8
LOCAL_MIN_TOL = -1e-12
SINGULAR_RTOL = 1e-12


def second_moment(grad_samples: np.ndarray) -> np.ndarray:
    samples = as_matrix(grad_samples, "gradient samples")
    sigma = samples.T @ samples / samples.shape[0]
    return 0.5 * (sigma + sigma.T)


def approx_meta_objective(
    p: np.ndarray, g_fsd: np.ndarray, sigma: np.ndarray, lambda_fsd: float, lambda_wsd: float
) -> float:
    return float(
        -np.trace(p @ sigma)
        + 0.5 * lambda_fsd * np.trace(p.T @ g_fsd @ p @ sigma)
        + 0.5 * lambda_wsd * np.trace(p.T @ p @ sigma)
    )


def approx_meta_gradient(
    p: np.ndarray, g_fsd: np.ndarray, sigma: np.ndarray, lambda_fsd: float, lambda_wsd: float
) -> np.ndarray:
    m = p.shape[0]
    return (lambda_fsd * g_fsd + lambda_wsd * np.eye(m)) @ p @ sigma - sigma


def verify_thm1(
    g_fsd: np.ndarray,
    grad_samples: np.ndarray,
    lambda_fsd: float,
    lambda_wsd: float,
    rng: Rng,
    *,
    candidate: np.ndarray | None = None,
    perturbations: int = 100,
    radius: float = 1e-3,
) -> Report:
    """Check that the candidate (default P*) is a stationary point and local minimizer of Q̂."""
    g_fsd = check_symmetric(as_matrix(g_fsd, "G"), "G")
    m = g_fsd.shape[0]
    if m > THM1_MAX_DIM:
        raise ContractError(f"Dense check is limited to {THM1_MAX_DIM} parameters, got {m}")
    sigma = second_moment(grad_samples)
    if sigma.shape != (m, m):
        raise ContractError(f"Gradient samples have {sigma.shape[0]} coordinates, G has {m}")
    scale = max(float(np.max(np.abs(sigma))), np.finfo(np.float64).tiny)
    if sym_eig_min(sigma) <= SINGULAR_RTOL * scale:
        raise ContractError("Gradient second moment is singular")

    p = optimal_dense_precond(g_fsd, lambda_fsd, lambda_wsd) if candidate is None else as_matrix(candidate)
    grad = approx_meta_gradient(p, g_fsd, sigma, lambda_fsd, lambda_wsd)
    grad_max = float(np.max(np.abs(grad)))

    base = approx_meta_objective(p, g_fsd, sigma, lambda_fsd, lambda_wsd)
    worst = np.inf
    for _ in range(perturbations):
        delta = rng.normal((m, m))
        delta *= radius / np.linalg.norm(delta)
        worst = min(worst, approx_meta_objective(p + delta, g_fsd, sigma, lambda_fsd, lambda_wsd) - base)

    checks: list[CheckResult] = [
        check_result("thm1_gradient_zero", grad_max, GRADIENT_TOL, grad_max <= GRADIENT_TOL),
        check_result(
            "thm1_local_minimum",
            float(worst),
            LOCAL_MIN_TOL,
            bool(worst >= LOCAL_MIN_TOL),
            detail=f"{perturbations} perturbations of norm {radius:g}",
        ),
    ]
    return summarize_checks(checks)
