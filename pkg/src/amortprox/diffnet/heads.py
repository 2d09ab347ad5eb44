"""Loss heads and predictive distributions.

Regression uses squared error ``‖y - t‖²`` with a unit-variance Gaussian predictive; classification
uses softmax cross-entropy; the Rosenbrock head maps the two network outputs ``(x, y)`` to the
function value, which serves both as the loss and as the predictive quantity for discrepancies.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax

from amortprox.errors import ContractError, DimensionError

from .model import Head

ROSENBROCK_A = 1.0
ROSENBROCK_B = 100.0


def rosenbrock(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a = ROSENBROCK_A - x
    b = y - x * x
    return a * a + ROSENBROCK_B * b * b


def rosenbrock_grad(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = y - x * x
    dx = -2.0 * (ROSENBROCK_A - x) - 4.0 * ROSENBROCK_B * x * b
    dy = 2.0 * ROSENBROCK_B * b
    return dx, dy


def _check_rosenbrock(outputs: np.ndarray) -> None:
    if outputs.shape[1] != 2:
        raise DimensionError(f"Rosenbrock head needs 2 outputs, got {outputs.shape[1]}")


def head_output(head: Head, outputs: np.ndarray) -> np.ndarray:
    """The per-example quantity the predictive distribution is parameterized by (B x d_h)."""
    if head == Head.ROSENBROCK:
        _check_rosenbrock(outputs)
        return rosenbrock(outputs[:, 0], outputs[:, 1])[:, None]
    return outputs


def head_output_vjp(head: Head, outputs: np.ndarray, d_h: np.ndarray) -> np.ndarray:
    """Pull a cotangent on `head_output` back to the network outputs."""
    if head == Head.ROSENBROCK:
        dx, dy = rosenbrock_grad(outputs[:, 0], outputs[:, 1])
        return np.stack([dx, dy], axis=1) * d_h[:, :1]
    return d_h


def head_output_jacobian(head: Head, outputs: np.ndarray) -> np.ndarray:
    """Per-example Jacobian of `head_output` with respect to the outputs, B x d_h x d_out."""
    n, d = outputs.shape
    if head == Head.ROSENBROCK:
        dx, dy = rosenbrock_grad(outputs[:, 0], outputs[:, 1])
        return np.stack([dx, dy], axis=1)[:, None, :]
    return np.broadcast_to(np.eye(d), (n, d, d)).copy()


def _labels(targets: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(targets)
    if labels.ndim == 2 and labels.shape[1] == 1:
        labels = labels[:, 0]
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(f"Label index out of range for {num_classes} classes")
    return labels


def loss_eval(head: Head, outputs: np.ndarray, targets: np.ndarray) -> float:
    """Mean loss over batch rows."""
    if head == Head.REGRESSION:
        targets = np.asarray(targets, dtype=np.float64).reshape(outputs.shape)
        return float(np.mean(np.sum((outputs - targets) ** 2, axis=1)))
    if head == Head.CLASSIFICATION:
        labels = _labels(targets, outputs.shape[1])
        logp = log_softmax(outputs, axis=1)
        return float(-np.mean(logp[np.arange(len(labels)), labels]))
    return float(np.mean(head_output(head, outputs)))


def loss_grad_outputs(head: Head, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of `loss_eval` with respect to the outputs (includes the 1/B of the mean)."""
    n = outputs.shape[0]
    if head == Head.REGRESSION:
        targets = np.asarray(targets, dtype=np.float64).reshape(outputs.shape)
        return 2.0 * (outputs - targets) / n
    if head == Head.CLASSIFICATION:
        labels = _labels(targets, outputs.shape[1])
        grad = softmax(outputs, axis=1)
        grad[np.arange(n), labels] -= 1.0
        return grad / n
    return head_output_vjp(head, outputs, np.full((n, 1), 1.0 / n))


def predictive(head: Head, outputs: np.ndarray) -> np.ndarray:
    """Distribution parameters: softmax probabilities, Gaussian means, or Rosenbrock values."""
    if head == Head.CLASSIFICATION:
        return softmax(outputs, axis=1)
    return head_output(head, outputs)


def accuracy(head: Head, outputs: np.ndarray, targets: np.ndarray) -> float:
    if head != Head.CLASSIFICATION:
        raise ContractError("accuracy is only defined for classification heads")
    labels = _labels(targets, outputs.shape[1])
    return float(np.mean(np.argmax(outputs, axis=1) == labels))
