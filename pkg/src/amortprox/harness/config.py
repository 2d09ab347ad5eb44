from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from amortprox.apo.config import AdaptMode, ProximalConfig
from amortprox.baseopt import BaseOptSpec
from amortprox.errors import ConfigError
from amortprox.tasks import TaskSpec
from amortprox.utils.config_mgr import config


# ProximalConfig fields whose defaults depend on the adaptation mode
MODE_FIELDS = {"meta_lr", "meta_opt", "warmup_steps"}


def _mode_defaults(mode: AdaptMode | str) -> ProximalConfig:
    return ProximalConfig.for_precond() if mode == AdaptMode.APO_PRECOND else ProximalConfig.for_lr()


class KfacSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=0.1, gt=0.0)
    damping: float = Field(default=1e-2, gt=0.0)
    ema_decay: float = Field(default=0.95, ge=0.0, lt=1.0)
    refresh_interval: int = Field(default=10, ge=1)
    cold_steps: int = Field(default=10, ge=0)


class ExperimentConfig(BaseModel):
    """One experiment, as read from a JSON document."""

    model_config = ConfigDict(extra="forbid")

    task: TaskSpec
    base: BaseOptSpec = Field(default_factory=BaseOptSpec)
    mode: AdaptMode = AdaptMode.NONE
    # None: the defaults for `mode`
    proximal: ProximalConfig | None = None
    kfac: KfacSettings = Field(default_factory=KfacSettings)
    steps: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    output: str | None = None

    @model_validator(mode="before")
    @classmethod
    def _layer_proximal_on_mode_defaults(cls, data: Any) -> Any:
        """A partial `proximal` block overrides the defaults for `mode` field by field."""
        if not isinstance(data, dict) or not isinstance(data.get("proximal"), dict):
            return data
        defaults = _mode_defaults(data.get("mode", AdaptMode.NONE)).model_dump(include=MODE_FIELDS)
        return data | {"proximal": defaults | data["proximal"]}

    def with_proximal_defaults(self) -> ExperimentConfig:
        if self.proximal is not None:
            return self
        return self.model_copy(update={"proximal": _mode_defaults(self.mode)})

    def resolved(self) -> ExperimentConfig:
        """Copy with the proximal defaults filled in and the APO_SEED override applied."""
        out = self.with_proximal_defaults()
        if config.apo_seed is not None:
            out = out.model_copy(update={"seed": config.apo_seed})
        return out

    def config_hash(self) -> str:
        doc = json.dumps(self.model_dump(mode="json", exclude={"output"}), sort_keys=True)
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()[:12]


def json_pointer(loc: tuple[int | str, ...]) -> str:
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in loc]
    return "/" + "/".join(parts) if parts else ""


def config_error(e: ValidationError, source: str) -> ConfigError:
    first = e.errors()[0]
    pointer = json_pointer(tuple(first["loc"]))
    return ConfigError(f"{source}: {first['msg']} at {pointer or '/'}", pointer=pointer)


def parse_experiment(doc: str | dict[str, Any], source: str = "config") -> ExperimentConfig:
    try:
        if isinstance(doc, str):
            return ExperimentConfig.model_validate_json(doc)
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        raise config_error(e, source) from e


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    return parse_experiment(text, str(path))


def set_dotted(doc: dict[str, Any], dotted: str, value: Any) -> dict[str, Any]:
    """Set ``doc["a"]["b"] = value`` for ``dotted == "a.b"``, creating objects on the way."""
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = {}
            node[key] = child
        if not isinstance(child, dict):
            raise ConfigError(f"Sweep axis {dotted}: {key} is not an object", pointer=f"/axes/{dotted}")
        node = child
    node[keys[-1]] = value
    return doc


class SweepSpec(BaseModel):
    """Cartesian product of values per dotted config path, e.g. ``{"base.lr": [0.01, 0.1]}``."""

    model_config = ConfigDict(extra="forbid")

    axes: dict[str, list[Any]]

    def points(self) -> list[dict[str, Any]]:
        if not self.axes or any(not values for values in self.axes.values()):
            raise ConfigError("Sweep axes must be nonempty", pointer="/axes")
        out: list[dict[str, Any]] = [{}]
        for name, values in self.axes.items():
            out = [point | {name: v} for point in out for v in values]
        return out


def load_sweep(path: str | Path) -> SweepSpec:
    path = Path(path)
    try:
        return SweepSpec.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read sweep {path}: {e}") from e
    except ValidationError as e:
        raise config_error(e, str(path)) from e


def expand_sweep(template: ExperimentConfig, sweep: SweepSpec) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    """Every grid point with its axis values."""
    base_doc = template.with_proximal_defaults().model_dump(mode="json")
    runs = []
    for point in sweep.points():
        doc = json.loads(json.dumps(base_doc))
        for name, value in point.items():
            set_dotted(doc, name, value)
        runs.append((point, parse_experiment(doc, f"sweep point {point}")))
    return runs
