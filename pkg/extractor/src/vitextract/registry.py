"""Model registry: the encoder checkpoints this tool knows how to export.

The default registry (models.json, shipped with the package) lists each
encoder with its source library id, expected representation dimensionality,
parameter count and provenance tags. Extraction refuses to write a file whose
dimensionality disagrees with the registry entry, so a wrong checkpoint fails
loudly instead of producing silently mismatched datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

REGISTRY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    name: str
    source: str  # "timm" | "open_clip"
    source_id: str
    repr_dim: int
    param_count_m: float
    training_method: str  # "standard" | "clip"
    pretrain_dataset: str
    finetune_dataset: str | None

    @property
    def is_clip(self) -> bool:
        return self.training_method == "clip"


def _parse(doc: dict) -> dict[str, ModelSpec]:
    if doc.get("schema_version") != REGISTRY_SCHEMA_VERSION:
        raise ValueError(f"unsupported registry schema {doc.get('schema_version')!r}")
    registry = {}
    for entry in doc["models"]:
        spec = ModelSpec(
            name=entry["name"],
            source=entry["source"],
            source_id=entry["source_id"],
            repr_dim=int(entry["repr_dim"]),
            param_count_m=float(entry["param_count_m"]),
            training_method=entry["training_method"],
            pretrain_dataset=entry["pretrain_dataset"],
            finetune_dataset=entry["finetune_dataset"],
        )
        if spec.name in registry:
            raise ValueError(f"duplicate model name {spec.name!r}")
        registry[spec.name] = spec
    return registry


def load_registry(path: str | Path | None = None) -> dict[str, ModelSpec]:
    """Load a registry config file; default is the packaged models.json."""
    if path is None:
        text = resources.files("vitextract").joinpath("models.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return _parse(json.loads(text))


def get_model_spec(name: str, path: str | Path | None = None) -> ModelSpec:
    registry = load_registry(path)
    if name not in registry:
        raise KeyError(f"unknown model {name!r}; registry has {sorted(registry)}")
    return registry[name]
