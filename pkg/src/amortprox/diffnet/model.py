from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, Iterator

import numpy as np

from amortprox.errors import DimensionError
from amortprox.numkit import Rng, unvec_cm, vec_cm


class Activation(StrEnum):
    LINEAR = "linear"
    RELU = "relu"
    SIGMOID = "sigmoid"


class Head(StrEnum):
    REGRESSION = "regression-gaussian-unit-variance"
    CLASSIFICATION = "classification-softmax"
    ROSENBROCK = "rosenbrock-direct"


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    activation: Activation = Activation.LINEAR
    has_bias: bool = True

    def __post_init__(self) -> None:
        if self.fan_in <= 0 or self.fan_out <= 0:
            raise DimensionError(f"Layer extents must be positive, got {self.fan_in}x{self.fan_out}")
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def num_params(self) -> int:
        return self.fan_in * self.fan_out + (self.fan_out if self.has_bias else 0)


@dataclass(frozen=True)
class Model:
    layers: tuple[LayerSpec, ...]
    head: Head

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionError("A model needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "head", Head(self.head))
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise DimensionError(f"Layer extents do not chain: {prev.fan_out} -> {nxt.fan_in}")

    @classmethod
    def mlp(
        cls,
        widths: list[int],
        head: Head | str,
        hidden: Activation | str = Activation.RELU,
        output: Activation | str = Activation.LINEAR,
        has_bias: bool = True,
    ) -> Model:
        """Fully connected network through the given widths, e.g. ``[d_in, h, d_out]``."""
        if len(widths) < 2:
            raise DimensionError("widths needs an input and an output extent")
        n = len(widths) - 1
        layers = tuple(
            LayerSpec(
                widths[i],
                widths[i + 1],
                Activation(output if i == n - 1 else hidden),
                has_bias,
            )
            for i in range(n)
        )
        return cls(layers, Head(head))

    @property
    def d_in(self) -> int:
        return self.layers[0].fan_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].fan_out

    @property
    def num_params(self) -> int:
        return sum(layer.num_params for layer in self.layers)


@dataclass(frozen=True)
class ParamSet:
    """Per-layer weights (fan_in x fan_out) and optional biases.

    Also used for gradients and other θ-shaped quantities. The flat ordering is layer by layer,
    ``vec_cm(W)`` followed by the bias.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray | None, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise DimensionError("weights and biases must have one entry per layer")
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        object.__setattr__(
            self, "biases", tuple(None if b is None else np.asarray(b, dtype=np.float64) for b in self.biases)
        )

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
        return iter(zip(self.weights, self.biases))

    @property
    def size(self) -> int:
        return sum(w.size + (0 if b is None else b.size) for w, b in self)

    def check_model(self, model: Model) -> None:
        if len(self) != len(model.layers):
            raise DimensionError(f"ParamSet has {len(self)} layers, model has {len(model.layers)}")
        for i, (layer, (w, b)) in enumerate(zip(model.layers, self)):
            if w.shape != (layer.fan_in, layer.fan_out):
                raise DimensionError(f"Layer {i} weight has shape {w.shape}, expected {(layer.fan_in, layer.fan_out)}")
            if layer.has_bias != (b is not None) or (b is not None and b.shape != (layer.fan_out,)):
                raise DimensionError(f"Layer {i} bias does not match the model")

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> ParamSet:
        return ParamSet(
            tuple(fn(w) for w in self.weights),
            tuple(None if b is None else fn(b) for b in self.biases),
        )

    def zip_map(self, other: ParamSet, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> ParamSet:
        if len(self) != len(other):
            raise DimensionError("ParamSets have different layer counts")
        weights = []
        biases: list[np.ndarray | None] = []
        for (w, b), (ow, ob) in zip(self, other):
            if w.shape != ow.shape or (b is None) != (ob is None):
                raise DimensionError("ParamSets are not conformable")
            weights.append(fn(w, ow))
            biases.append(None if b is None or ob is None else fn(b, ob))
        return ParamSet(tuple(weights), tuple(biases))

    def axpy(self, alpha: float, other: ParamSet) -> ParamSet:
        """``self + alpha * other``."""
        return self.zip_map(other, lambda x, y: x + alpha * y)

    def __add__(self, other: ParamSet) -> ParamSet:
        return self.zip_map(other, np.add)

    def __sub__(self, other: ParamSet) -> ParamSet:
        return self.zip_map(other, np.subtract)

    def scale(self, alpha: float) -> ParamSet:
        return self.map(lambda x: alpha * x)

    def zeros_like(self) -> ParamSet:
        return self.map(np.zeros_like)

    def dot(self, other: ParamSet) -> float:
        return float(np.dot(self.flatten(), other.flatten()))

    def sq_norm(self) -> float:
        flat = self.flatten()
        return float(np.dot(flat, flat))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flatten())))

    def flatten(self) -> np.ndarray:
        parts: list[np.ndarray] = []
        for w, b in self:
            parts.append(vec_cm(w))
            if b is not None:
                parts.append(b)
        return np.concatenate(parts) if parts else np.zeros(0)

    def unflatten(self, vec: np.ndarray) -> ParamSet:
        """New ParamSet with this one's shapes filled from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise DimensionError(f"Flat vector has shape {vec.shape}, expected ({self.size},)")
        weights = []
        biases: list[np.ndarray | None] = []
        offset = 0
        for w, b in self:
            p, q = w.shape
            weights.append(unvec_cm(vec[offset : offset + p * q], p, q))
            offset += p * q
            if b is None:
                biases.append(None)
            else:
                biases.append(vec[offset : offset + b.size].copy())
                offset += b.size
        return ParamSet(tuple(weights), tuple(biases))

    @classmethod
    def zeros(cls, model: Model) -> ParamSet:
        return cls(
            tuple(np.zeros((layer.fan_in, layer.fan_out)) for layer in model.layers),
            tuple(np.zeros(layer.fan_out) if layer.has_bias else None for layer in model.layers),
        )


@dataclass(frozen=True)
class Batch:
    """Inputs (B x d_in) with regression targets (B x d_out) or class labels (B,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim != 2:
            raise DimensionError(f"inputs must be B x d_in, got shape {inputs.shape}")
        targets = np.asarray(self.targets)
        if targets.shape[0] != inputs.shape[0]:
            raise DimensionError(f"{inputs.shape[0]} inputs but {targets.shape[0]} targets")
        if inputs.shape[0] < 1:
            raise DimensionError("A batch needs at least one example")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def take(self, idx: np.ndarray) -> Batch:
        return Batch(self.inputs[idx], self.targets[idx])


def init_params(model: Model, rng: Rng) -> ParamSet:
    """Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights = []
    biases: list[np.ndarray | None] = []
    for layer in model.layers:
        bound = 1.0 / np.sqrt(layer.fan_in)
        weights.append(rng.uniform(-bound, bound, (layer.fan_in, layer.fan_out)))
        biases.append(rng.uniform(-bound, bound, layer.fan_out) if layer.has_bias else None)
    return ParamSet(tuple(weights), tuple(biases))
