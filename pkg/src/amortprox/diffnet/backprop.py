from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from amortprox.errors import DimensionError, NumericalError, OracleScaleError
from amortprox.utils.config_mgr import config

from .heads import loss_grad_outputs
from .model import Activation, Batch, Head, Model, ParamSet


@dataclass(frozen=True)
class ForwardTrace:
    """Values kept from the forward pass.

    ``activations[0]`` is the input; ``activations[l + 1] = act(pre_activations[l])``.
    """

    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]


def _activate(kind: Activation, s: np.ndarray) -> np.ndarray:
    if kind == Activation.RELU:
        return np.maximum(s, 0.0)
    if kind == Activation.SIGMOID:
        return expit(s)
    return s


def _activation_grad(kind: Activation, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == Activation.RELU:
        # subgradient 0 at the kink
        return (s > 0.0).astype(np.float64)
    if kind == Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(s)


def forward(model: Model, params: ParamSet, inputs: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    params.check_model(model)
    a = np.asarray(inputs, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.d_in:
        raise DimensionError(f"inputs must be B x {model.d_in}, got shape {a.shape}")

    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = [a]
    for layer, (w, b) in zip(model.layers, params):
        s = a @ w
        if b is not None:
            s = s + b
        a = _activate(layer.activation, s)
        pre.append(s)
        acts.append(a)

    if not np.all(np.isfinite(a)):
        raise NumericalError("Non-finite network output", term="forward")
    return a, ForwardTrace(tuple(pre), tuple(acts))


def backward(
    model: Model, params: ParamSet, trace: ForwardTrace, d_outputs: np.ndarray
) -> tuple[ParamSet, list[np.ndarray]]:
    """Reverse-mode pass from a cotangent on the outputs.

    Returns the parameter gradient summed over rows, and the per-row pre-activation gradients
    ``Ds_l`` (B x fan_out) of every layer. Rows never mix, so each ``Ds_l[b]`` depends only on
    ``d_outputs[b]``.
    """
    delta_a = np.asarray(d_outputs, dtype=np.float64)
    n_layers = len(model.layers)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray | None] = [None] * n_layers
    deltas: list[np.ndarray] = [np.empty(0)] * n_layers

    for i in reversed(range(n_layers)):
        layer = model.layers[i]
        s = trace.pre_activations[i]
        a_out = trace.activations[i + 1]
        a_in = trace.activations[i]
        ds = delta_a * _activation_grad(layer.activation, s, a_out)
        deltas[i] = ds
        grad_w[i] = a_in.T @ ds
        if layer.has_bias:
            grad_b[i] = ds.sum(axis=0)
        delta_a = ds @ params.weights[i].T

    return ParamSet(tuple(grad_w), tuple(grad_b)), deltas


def grad_params(model: Model, params: ParamSet, batch: Batch, head: Head | None = None) -> ParamSet:
    """Gradient of the mean batch loss with respect to every weight and bias."""
    head = model.head if head is None else head
    outputs, trace = forward(model, params, batch.inputs)
    grads, _ = backward(model, params, trace, loss_grad_outputs(head, outputs, batch.targets))
    if not grads.is_finite():
        raise NumericalError("Non-finite parameter gradient", term="grad_params")
    return grads


def per_example_grads(trace: ForwardTrace, model: Model, deltas: list[np.ndarray]) -> np.ndarray:
    """Per-row flat gradients (B x m) from per-row pre-activation gradients."""
    parts = []
    n = deltas[0].shape[0]
    for i, layer in enumerate(model.layers):
        a_in = trace.activations[i]
        # vec_cm(a dsᵀ) = ds ⊗ a, i.e. index j * fan_in + k
        parts.append(np.einsum("bj,bk->bjk", deltas[i], a_in).reshape(n, -1))
        if layer.has_bias:
            parts.append(deltas[i])
    return np.concatenate(parts, axis=1)


def per_example_jacobian(model: Model, params: ParamSet, inputs: np.ndarray) -> np.ndarray:
    """Jacobian of every output with respect to the flat parameters, B x d_out x m."""
    m = model.num_params
    if m > config.oracle_max_params:
        raise OracleScaleError(f"Jacobian over {m} parameters exceeds limit {config.oracle_max_params}")
    outputs, trace = forward(model, params, inputs)
    n, d_out = outputs.shape
    jac = np.empty((n, d_out, m))
    for k in range(d_out):
        d_out_k = np.zeros((n, d_out))
        d_out_k[:, k] = 1.0
        _, deltas = backward(model, params, trace, d_out_k)
        jac[:, k, :] = per_example_grads(trace, model, deltas)
    return jac
