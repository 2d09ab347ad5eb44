"""
Dense curvature matrices over the flat parameter vector.

The FSD Hessian at ``θ' = θ`` is the Gauss-Newton form ``mean_x Jᵀ H_ρ J`` with J the Jacobian of
the head output; for the categorical KL it is the Fisher information. With the loss's own output
Hessian the same assembly gives the generalized Gauss-Newton matrix.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky
from scipy.special import softmax

from amortprox.apo.config import FsdKind
from amortprox.apo.discrepancy import rho_hessian
from amortprox.diffnet import (
    Batch,
    Head,
    Model,
    ParamSet,
    backward,
    forward,
    grad_params,
    head_output,
    head_output_jacobian,
    per_example_grads,
    per_example_jacobian,
)
from amortprox.errors import ContractError, OracleScaleError
from amortprox.numkit import Rng, check_symmetric
from amortprox.utils.config_mgr import config

FD_STEP = 1e-5


def _inputs(data: Batch | np.ndarray) -> np.ndarray:
    inputs = data.inputs if isinstance(data, Batch) else np.asarray(data, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ContractError(f"Need a non-empty B x d_in input array, got shape {inputs.shape}")
    return inputs


def fsd_hessian_exact(
    model: Model,
    theta: ParamSet,
    data: Batch | np.ndarray,
    kind: FsdKind,
    output_precision: np.ndarray | None = None,
) -> np.ndarray:
    """``G = mean_x J_hᵀ H_ρ J_h`` at θ."""
    inputs = _inputs(data)
    jac = per_example_jacobian(model, theta, inputs)
    outputs, _ = forward(model, theta, inputs)
    jac_h = np.einsum("bho,bom->bhm", head_output_jacobian(model.head, outputs), jac)
    h_rho = rho_hessian(kind, head_output(model.head, outputs), output_precision)
    g = np.einsum("bhm,bhk,bkn->mn", jac_h, h_rho, jac_h) / inputs.shape[0]
    g = 0.5 * (g + g.T)
    return check_symmetric(g, "FSD Hessian")


def loss_output_kind(head: Head) -> FsdKind:
    """The divergence whose output Hessian equals the per-example loss's output Hessian."""
    match head:
        case Head.REGRESSION:
            return FsdKind.SQUARED
        case Head.CLASSIFICATION:
            return FsdKind.KL_CATEGORICAL
    raise ContractError(f"No positive semi-definite Gauss-Newton form for head {head}")


def ggn_matrix(model: Model, theta: ParamSet, batch: Batch) -> np.ndarray:
    """Generalized Gauss-Newton matrix of the mean batch loss."""
    return fsd_hessian_exact(model, theta, batch, loss_output_kind(model.head))


def fd_loss_hessian(model: Model, theta: ParamSet, batch: Batch, h: float = FD_STEP) -> np.ndarray:
    """Loss Hessian from central differences of the exact gradient, symmetrized."""
    m = theta.size
    if m > config.spd_max_dim:
        raise OracleScaleError(f"Finite-difference Hessian over {m} parameters exceeds limit {config.spd_max_dim}")
    flat = theta.flatten()
    hess = np.empty((m, m))
    for i in range(m):
        step = np.zeros(m)
        step[i] = h
        g_plus = grad_params(model, theta.unflatten(flat + step), batch).flatten()
        g_minus = grad_params(model, theta.unflatten(flat - step), batch).flatten()
        hess[:, i] = (g_plus - g_minus) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def output_hessian_sqrt(
    head: Head, outputs: np.ndarray, output_precision: np.ndarray | None = None
) -> np.ndarray:
    """Per-example factors R (B x d_out x r) with ``R Rᵀ`` the NLL Hessian in the outputs."""
    n, d = outputs.shape
    match head:
        case Head.CLASSIFICATION:
            p = softmax(outputs, axis=1)
            # column k: sqrt(p_k) (e_k - p)
            diff = np.eye(d)[None, :, :] - p[:, :, None]
            return diff * np.sqrt(p)[:, None, :]
        case Head.REGRESSION:
            precision = np.eye(d) if output_precision is None else np.asarray(output_precision, dtype=np.float64)
            root = cholesky(precision, lower=True)
            return np.broadcast_to(root, (n, d, d)).copy()
    raise ContractError(f"Head {head} has no predictive distribution")


def sample_output_grads(
    head: Head, outputs: np.ndarray, rng: Rng, output_precision: np.ndarray | None = None
) -> np.ndarray:
    """Per-example NLL gradients in the outputs for targets drawn from the model's predictive."""
    n, d = outputs.shape
    match head:
        case Head.CLASSIFICATION:
            p = softmax(outputs, axis=1)
            u = rng.uniform(0.0, 1.0, (n, 1))
            labels = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), d - 1)
            grads = p.copy()
            grads[np.arange(n), labels] -= 1.0
            return grads
        case Head.REGRESSION:
            precision = np.eye(d) if output_precision is None else np.asarray(output_precision, dtype=np.float64)
            root = cholesky(precision, lower=True)
            # Λ(y - t) with t ~ N(y, Λ⁻¹) is L z
            return rng.normal((n, d)) @ root.T
    raise ContractError(f"Head {head} has no predictive distribution")


def sampled_fisher(
    model: Model,
    theta: ParamSet,
    data: Batch | np.ndarray,
    rng: Rng,
    samples: int,
    *,
    chunk: int = 10_000,
    output_precision: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo Fisher ``E[∇log p ∇log pᵀ]`` with targets sampled from the model.

    Draws `samples` (example, target) pairs, cycling through the inputs, and returns the estimate
    with its per-entry standard error.
    """
    inputs = _inputs(data)
    if samples < 2:
        raise ContractError(f"Need at least 2 samples, got {samples}")
    m = theta.size
    total = np.zeros((m, m))
    total_sq = np.zeros((m, m))
    n = inputs.shape[0]
    drawn = 0
    while drawn < samples:
        size = min(chunk, samples - drawn)
        rows = inputs[(np.arange(drawn, drawn + size)) % n]
        outputs, trace = forward(model, theta, rows)
        d_out = sample_output_grads(model.head, outputs, rng, output_precision)
        _, deltas = backward(model, theta, trace, d_out)
        grads = per_example_grads(trace, model, deltas)
        outer = np.einsum("bi,bj->bij", grads, grads)
        total += outer.sum(axis=0)
        total_sq += (outer * outer).sum(axis=0)
        drawn += size
    mean = total / samples
    var = np.maximum(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, np.sqrt(var / samples)
