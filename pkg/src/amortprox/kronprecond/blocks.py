"""
Kronecker-structured preconditioner.

For a weight ``W`` of shape ``m_i x m_o`` the preconditioner is

    P_S = (A ⊗ B) diag(vec(S))² (A ⊗ B)ᵀ,   A: m_o x m_o,  B: m_i x m_i,  S: m_i x m_o

which is PSD for any A, B, S. Applied to a gradient it never needs to be materialized:

    unvec(P_S vec(G)) = B (S² ⊙ (Bᵀ G A)) Aᵀ

Biases get an independent diagonal preconditioner ``diag(d)²``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amortprox.diffnet import Model, ParamSet
from amortprox.errors import DimensionError, NumericalError, OracleScaleError
from amortprox.numkit import kron_dense, unvec_cm, vec_cm
from amortprox.utils.config_mgr import config

DENSE_MAX = 64


@dataclass(frozen=True)
class KronBlocks:
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        s = np.asarray(self.s, dtype=np.float64)
        if s.ndim != 2:
            raise DimensionError(f"S must be a matrix, got shape {s.shape}")
        m_in, m_out = s.shape
        if a.shape != (m_out, m_out) or b.shape != (m_in, m_in):
            raise DimensionError(f"Blocks A{a.shape}, B{b.shape} do not match S{s.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "s", s)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the weight matrix these blocks precondition."""
        return self.s.shape  # type: ignore[return-value]

    @property
    def num_params(self) -> int:
        m_in, m_out = self.shape
        return m_in * m_in + m_out * m_out + m_in * m_out

    @classmethod
    def identity(cls, m_in: int, m_out: int) -> KronBlocks:
        return cls(np.eye(m_out), np.eye(m_in), np.ones((m_in, m_out)))


@dataclass(frozen=True)
class PrecondPhi:
    """Preconditioner meta-parameters: one block set per weight, one diagonal per bias."""

    blocks: tuple[KronBlocks, ...]
    bias_diags: tuple[np.ndarray | None, ...]
    scale: float = 0.9

    def __post_init__(self) -> None:
        if len(self.blocks) != len(self.bias_diags):
            raise DimensionError("blocks and bias_diags must have one entry per layer")
        if self.scale <= 0:
            raise DimensionError(f"scale must be positive, got {self.scale}")

    @property
    def size(self) -> int:
        return sum(blk.num_params + (0 if d is None else d.size) for blk, d in zip(self.blocks, self.bias_diags))

    def flatten(self) -> np.ndarray:
        parts: list[np.ndarray] = []
        for blk, d in zip(self.blocks, self.bias_diags):
            parts += [vec_cm(blk.a), vec_cm(blk.b), vec_cm(blk.s)]
            if d is not None:
                parts.append(d)
        return np.concatenate(parts)

    def unflatten(self, vec: np.ndarray) -> PrecondPhi:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise DimensionError(f"Flat vector has shape {vec.shape}, expected ({self.size},)")
        blocks = []
        diags: list[np.ndarray | None] = []
        offset = 0

        def take(p: int, q: int) -> np.ndarray:
            nonlocal offset
            out = unvec_cm(vec[offset : offset + p * q], p, q)
            offset += p * q
            return out

        for blk, d in zip(self.blocks, self.bias_diags):
            m_in, m_out = blk.shape
            blocks.append(KronBlocks(take(m_out, m_out), take(m_in, m_in), take(m_in, m_out)))
            if d is None:
                diags.append(None)
            else:
                diags.append(vec[offset : offset + d.size].copy())
                offset += d.size
        return PrecondPhi(tuple(blocks), tuple(diags), self.scale)

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.flatten()))


def apply_precond(blocks: KronBlocks, grad_w: np.ndarray) -> np.ndarray:
    """``B (S² ⊙ (Bᵀ G A)) Aᵀ`` == ``unvec(P_S vec(G))``."""
    grad_w = np.asarray(grad_w, dtype=np.float64)
    if grad_w.shape != blocks.shape:
        raise DimensionError(f"Gradient shape {grad_w.shape} does not match blocks {blocks.shape}")
    inner = blocks.b.T @ grad_w @ blocks.a
    return blocks.b @ (blocks.s * blocks.s * inner) @ blocks.a.T


def dense_precond(blocks: KronBlocks) -> np.ndarray:
    """Materialize P_S; oracle use only."""
    m_in, m_out = blocks.shape
    if m_in * m_out > DENSE_MAX:
        raise OracleScaleError(f"Dense preconditioner of order {m_in * m_out} exceeds {DENSE_MAX}")
    c = kron_dense(blocks.a, blocks.b)
    return (c * vec_cm(blocks.s) ** 2) @ c.T


def init_identity(model: Model, scale: float | None = None) -> PrecondPhi:
    """Blocks for which P_S = I, so the first step is SGD with learning rate `scale`."""
    return PrecondPhi(
        tuple(KronBlocks.identity(layer.fan_in, layer.fan_out) for layer in model.layers),
        tuple(np.ones(layer.fan_out) if layer.has_bias else None for layer in model.layers),
        config.precond_scale if scale is None else scale,
    )


def precondition(phi: PrecondPhi, g: ParamSet) -> ParamSet:
    """``P g`` layer by layer, without the scale."""
    if len(g) != len(phi.blocks):
        raise DimensionError(f"Gradient has {len(g)} layers, preconditioner {len(phi.blocks)}")
    weights = tuple(apply_precond(blk, gw) for blk, gw in zip(phi.blocks, g.weights))
    biases = tuple(
        None if gb is None or d is None else d * d * gb for d, gb in zip(phi.bias_diags, g.biases)
    )
    return ParamSet(weights, biases)


def apply_precond_update(theta: ParamSet, phi: PrecondPhi, g: ParamSet) -> ParamSet:
    """``θ' = θ - c P_S g``."""
    new_theta = theta.axpy(-phi.scale, precondition(phi, g))
    if not new_theta.is_finite():
        raise NumericalError("Preconditioned update produced non-finite parameters", term="apply_precond_update")
    return new_theta


def precond_backward(phi: PrecondPhi, g: ParamSet, cotangent: ParamSet) -> PrecondPhi:
    """Gradient with respect to φ of ``<cotangent, θ'(φ)>`` where ``θ' = θ - c P_S(φ) g``.

    The result is returned as a PrecondPhi holding ∂/∂A, ∂/∂B, ∂/∂S and ∂/∂d.
    """
    c = phi.scale
    blocks = []
    diags: list[np.ndarray | None] = []
    layers = zip(phi.blocks, phi.bias_diags, g.weights, g.biases, cotangent.weights, cotangent.biases)
    for blk, d, gw, gb, mw, mb in layers:
        a, b, s = blk.a, blk.b, blk.s
        x = b.T @ gw @ a
        y = s * s * x
        z_bar = -c * mw
        # Z = B Y Aᵀ
        a_bar = z_bar.T @ b @ y
        b_bar = z_bar @ a @ y.T
        y_bar = b.T @ z_bar @ a
        # Y = S² ⊙ X
        s_bar = 2.0 * s * x * y_bar
        x_bar = s * s * y_bar
        # X = Bᵀ G A
        a_bar += gw.T @ b @ x_bar
        b_bar += gw @ a @ x_bar.T
        blocks.append(KronBlocks(a_bar, b_bar, s_bar))
        if d is None or gb is None or mb is None:
            diags.append(None)
        else:
            diags.append(-c * 2.0 * d * gb * mb)
    return PrecondPhi(tuple(blocks), tuple(diags), phi.scale)
