from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import Callable

from pydantic import BaseModel, ConfigDict, Field, model_validator

from amortprox.apo.config import FsdKind
from amortprox.diffnet import Batch, Model, ParamSet, init_params
from amortprox.errors import ContractError
from amortprox.numkit import Rng

HOLDOUT_FRACTION = 0.2


class TaskKind(StrEnum):
    ROSENBROCK = "rosenbrock"
    ILLCOND_LINEAR = "illcond-linear"
    SYNTH_REGRESSION = "synth-regression"
    SYNTH_CLASSIFICATION = "synth-classification"
    BOTTLENECK_AUTOENCODER = "bottleneck-autoencoder"
    UCI_CSV = "uci-csv"


class TaskSpec(BaseModel):
    """Problem description; every generator is deterministic given `seed`."""

    model_config = ConfigDict(extra="forbid")

    kind: TaskKind
    # input dimension (illcond d, synthetic feature count); ignored where fixed
    dim: int = Field(default=8, ge=1)
    hidden: int = Field(default=16, ge=1)
    batch_size: int = Field(default=32, ge=1)
    # None for tasks that sample fresh data every batch
    dataset_size: int | None = Field(default=512, ge=1)
    seed: int = Field(default=0, ge=0)

    kappa: float = Field(default=1e10, ge=1.0)
    noise: float = Field(default=0.1, ge=0.0)
    classes: int = Field(default=3, ge=2)
    separation: float = Field(default=3.0, gt=0.0)
    csv_path: str | None = None

    @model_validator(mode="after")
    def _check_sizes(self) -> TaskSpec:
        if self.kind == TaskKind.ILLCOND_LINEAR and self.dim < 2:
            raise ValueError("illcond-linear needs dim >= 2")
        if self.kind == TaskKind.UCI_CSV and not self.csv_path:
            raise ValueError("uci-csv needs csv_path")
        if self.dataset_size is not None and self.batch_size > self.dataset_size:
            raise ValueError(f"batch_size {self.batch_size} exceeds dataset_size {self.dataset_size}")
        return self


Sampler = Callable[[Rng, int], Batch]


@dataclass(frozen=True)
class Task:
    """A generated problem: model, data and the FSD kind that fits its predictive distribution."""

    spec: TaskSpec
    model: Model
    fsd_kind: FsdKind
    train: Batch | None = None
    holdout: Batch | None = None
    # draws `size` examples; used when there is no finite training set
    sampler: Sampler | None = None
    # fixed starting point, e.g. the Rosenbrock initialization
    theta0: ParamSet | None = None

    def __post_init__(self) -> None:
        if self.train is None and self.sampler is None:
            raise ContractError("A task needs a training set or a sampler")

    @property
    def batch_size(self) -> int:
        if self.train is not None:
            return min(self.spec.batch_size, len(self.train))
        return self.spec.batch_size

    def sample(self, rng: Rng, size: int | None = None) -> Batch:
        size = self.batch_size if size is None else size
        if self.sampler is not None:
            return self.sampler(rng, size)
        assert self.train is not None
        n = len(self.train)
        if size >= n:
            return self.train
        return self.train.take(rng.choice(n, size))

    def init_params(self, rng: Rng) -> ParamSet:
        if self.theta0 is not None:
            return self.theta0
        return init_params(self.model, rng)


def split_holdout(data: Batch, rng: Rng, fraction: float = HOLDOUT_FRACTION) -> tuple[Batch, Batch | None]:
    """Random train/held-out split; datasets too small to split keep everything for training."""
    n = len(data)
    n_hold = int(round(n * fraction))
    if n_hold < 1 or n - n_hold < 1:
        return data, None
    perm = rng.generator.permutation(n)
    return data.take(perm[n_hold:]), data.take(perm[:n_hold])
