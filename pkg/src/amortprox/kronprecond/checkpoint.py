from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from amortprox.errors import ContractError

from .blocks import KronBlocks, PrecondPhi


def phi_to_dict(phi: PrecondPhi) -> dict[str, Any]:
    """Layer name -> row-major block arrays."""
    layers: dict[str, Any] = {}
    for i, (blk, d) in enumerate(zip(phi.blocks, phi.bias_diags)):
        entry: dict[str, Any] = {"A": blk.a.tolist(), "B": blk.b.tolist(), "S": blk.s.tolist()}
        if d is not None:
            entry["d"] = d.tolist()
        layers[f"layer_{i}"] = entry
    return {"scale": phi.scale, "layers": layers}


def phi_from_dict(doc: dict[str, Any]) -> PrecondPhi:
    try:
        layers = doc["layers"]
        names = sorted(layers, key=lambda name: int(name.rsplit("_", 1)[1]))
        blocks = []
        diags: list[np.ndarray | None] = []
        for name in names:
            entry = layers[name]
            blocks.append(KronBlocks(np.array(entry["A"]), np.array(entry["B"]), np.array(entry["S"])))
            diags.append(np.array(entry["d"], dtype=np.float64) if "d" in entry else None)
        return PrecondPhi(tuple(blocks), tuple(diags), float(doc["scale"]))
    except (KeyError, IndexError, ValueError, TypeError) as e:
        raise ContractError(f"Malformed preconditioner document: {e}") from e


def dump_phi(phi: PrecondPhi, path: str | Path) -> None:
    Path(path).write_text(json.dumps(phi_to_dict(phi)), encoding="utf-8")


def load_phi(path: str | Path) -> PrecondPhi:
    return phi_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
