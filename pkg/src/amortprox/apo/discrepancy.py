"""Function-space and weight-space discrepancies."""

from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax

from amortprox.diffnet import Batch, Model, ParamSet, backward, forward, head_output, head_output_vjp
from amortprox.errors import DimensionError

from .config import FsdKind


def rho(kind: FsdKind, h_new: np.ndarray, h_old: np.ndarray) -> np.ndarray:
    """Per-example output divergence between updated and current predictions."""
    if kind == FsdKind.KL_CATEGORICAL:
        logp_old = log_softmax(h_old, axis=1)
        logp_new = log_softmax(h_new, axis=1)
        return np.sum(np.exp(logp_old) * (logp_old - logp_new), axis=1)
    diff = h_new - h_old
    sq = np.sum(diff * diff, axis=1)
    return 0.5 * sq if kind == FsdKind.KL_GAUSSIAN else sq


def rho_grad(kind: FsdKind, h_new: np.ndarray, h_old: np.ndarray) -> np.ndarray:
    """Gradient of `rho` with respect to the updated prediction."""
    if kind == FsdKind.KL_CATEGORICAL:
        return softmax(h_new, axis=1) - softmax(h_old, axis=1)
    diff = h_new - h_old
    return diff if kind == FsdKind.KL_GAUSSIAN else 2.0 * diff


def rho_hessian(kind: FsdKind, h: np.ndarray, output_precision: np.ndarray | None = None) -> np.ndarray:
    """Per-example Hessian of `rho` in the updated prediction at ``h_new == h_old == h``.

    For the Gaussian KL an optional fixed output precision replaces the unit variance.
    """
    n, d = h.shape
    if kind == FsdKind.KL_CATEGORICAL:
        p = softmax(h, axis=1)
        return np.einsum("bi,ij->bij", p, np.eye(d)) - np.einsum("bi,bj->bij", p, p)
    if kind == FsdKind.KL_GAUSSIAN:
        precision = np.eye(d) if output_precision is None else np.asarray(output_precision, dtype=np.float64)
        if precision.shape != (d, d):
            raise DimensionError(f"Output precision must be {d}x{d}, got {precision.shape}")
        return np.broadcast_to(precision, (n, d, d)).copy()
    return np.broadcast_to(2.0 * np.eye(d), (n, d, d)).copy()


def wsd(theta_new: ParamSet, theta: ParamSet) -> float:
    """½‖θ' - θ‖² over all weights and biases."""
    return 0.5 * (theta_new - theta).sq_norm()


def fsd(model: Model, theta_new: ParamSet, theta: ParamSet, batch: Batch, kind: FsdKind) -> float:
    """Mean divergence of predictions over the batch inputs; targets are unused."""
    out_new, _ = forward(model, theta_new, batch.inputs)
    out_old, _ = forward(model, theta, batch.inputs)
    return float(np.mean(rho(kind, head_output(model.head, out_new), head_output(model.head, out_old))))


def fsd_value_and_grad(
    model: Model, theta_new: ParamSet, reference_outputs: np.ndarray, inputs: np.ndarray, kind: FsdKind
) -> tuple[float, ParamSet]:
    """FSD and its gradient in θ', given the current model's outputs on the same inputs."""
    out_new, trace = forward(model, theta_new, inputs)
    h_new = head_output(model.head, out_new)
    h_old = head_output(model.head, reference_outputs)
    n = inputs.shape[0]
    value = float(np.mean(rho(kind, h_new, h_old)))
    d_out = head_output_vjp(model.head, out_new, rho_grad(kind, h_new, h_old) / n)
    grad, _ = backward(model, theta_new, trace, d_out)
    return value, grad
