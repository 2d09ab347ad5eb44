from __future__ import annotations

import numpy as np

from amortprox.apo.config import ProximalConfig
from amortprox.apo.objective import MetaInputs, MetaParams, evaluate_meta
from amortprox.diffnet import Model

META_FD_STEP = 1e-4


def fd_meta_gradient(
    model: Model, phi: MetaParams, inputs: MetaInputs, cfg: ProximalConfig, h: float = META_FD_STEP
) -> np.ndarray:
    """Central differences of the meta-objective over every flat entry of φ."""
    flat = phi.flatten()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        step = np.zeros_like(flat)
        step[i] = h
        plus, _ = evaluate_meta(model, phi.unflatten(flat + step), inputs, cfg, with_grad=False)
        minus, _ = evaluate_meta(model, phi.unflatten(flat - step), inputs, cfg, with_grad=False)
        grad[i] = (plus.value - minus.value) / (2.0 * h)
    return grad
