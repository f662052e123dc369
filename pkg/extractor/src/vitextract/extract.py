"""Batched export of frozen-encoder representations into EMB1/LBL1 datasets.

Per image: forward pass with frozen weights, pool to one vector (the encoder
wrapper's job), l2-normalize, store as one sample column. Sample ids are the
image paths relative to the source root, sorted, so two extractions over the
same tree are sample-aligned by construction; labels come from the top-level
directory names. Undecodable images are skipped and logged, never fatal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import formats
from .registry import ModelSpec

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


class DimensionMismatchError(RuntimeError):
    """Checkpoint produced a different dimensionality than the registry expects."""


@dataclass(frozen=True)
class ExtractionSummary:
    model: str
    dim: int
    count: int
    num_classes: int
    skipped: tuple


def list_image_tree(source_dir) -> tuple[list[Path], list[int], list[str]]:
    """(paths, labels, class_names) for a class-per-subdirectory image tree."""
    root = Path(source_dir)
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(class_names) < 2:
        raise ValueError(f"{root}: need at least 2 class subdirectories")
    paths, labels = [], []
    for idx, name in enumerate(class_names):
        for path in sorted((root / name).rglob("*")):
            if path.suffix.lower() in IMAGE_SUFFIXES and path.is_file():
                paths.append(path)
                labels.append(idx)
    if not paths:
        raise ValueError(f"{root}: no decodable image files found")
    return paths, labels, class_names


def _load_batch(paths, preprocess):
    from PIL import Image

    tensors, ok = [], []
    for path in paths:
        try:
            with Image.open(path) as img:
                tensors.append(preprocess(img))
            ok.append(True)
        except Exception as exc:  # decode failure: skip and log
            logger.warning("skipping undecodable image %s: %s", path, exc)
            ok.append(False)
    return tensors, ok


def extract(
    spec: ModelSpec,
    encoder,
    source_dir,
    out_dir,
    batch_size: int = 32,
    precision: str = "f32",
) -> ExtractionSummary:
    """Export one encoder over one image tree; writes EMB1 + LBL1 + ids + summary."""
    paths, labels, class_names = list_image_tree(source_dir)
    root = Path(source_dir)

    columns, kept_labels, kept_ids, skipped = [], [], [], []
    for start in range(0, len(paths), batch_size):
        chunk = paths[start : start + batch_size]
        tensors, ok = _load_batch(chunk, encoder.preprocess)
        for path, good in zip(chunk, ok):
            if not good:
                skipped.append(str(path.relative_to(root)))
        if not tensors:
            continue
        vectors = encoder.embed(torch.stack(tensors)).double().cpu().numpy()
        row = 0
        for offset, (path, good) in enumerate(zip(chunk, ok)):
            if not good:
                continue
            vec = vectors[row]
            row += 1
            norm = float(np.linalg.norm(vec))
            if norm == 0.0 or not np.isfinite(norm):
                logger.warning("skipping %s: degenerate embedding norm %s", path, norm)
                skipped.append(str(path.relative_to(root)))
                continue
            columns.append(vec / norm)
            kept_labels.append(labels[start + offset])
            kept_ids.append(str(path.relative_to(root)))

    if not columns:
        raise ValueError("extraction produced no embeddings")
    matrix = np.stack(columns, axis=1)
    if matrix.shape[0] != spec.repr_dim:
        raise DimensionMismatchError(
            f"{spec.name}: checkpoint produced dim {matrix.shape[0]}, "
            f"registry expects {spec.repr_dim}"
        )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_embeddings(matrix, out / "embeddings.emb1", precision=precision)
    formats.write_labels(np.array(kept_labels), len(class_names), out / "labels.lbl1")
    formats.write_sample_ids(kept_ids, out / "ids.json")
    summary = ExtractionSummary(
        model=spec.name,
        dim=matrix.shape[0],
        count=matrix.shape[1],
        num_classes=len(class_names),
        skipped=tuple(skipped),
    )
    (out / "extraction.json").write_text(
        json.dumps(
            {
                "model": spec.name,
                "source": spec.source,
                "source_id": spec.source_id,
                "dim": summary.dim,
                "count": summary.count,
                "num_classes": summary.num_classes,
                "class_names": class_names,
                "encoder": encoder.describe(),
                "precision": precision,
                "skipped": list(skipped),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return summary


@dataclass(frozen=True)
class PairingReport:
    ok: bool
    count_x: int
    count_y: int
    first_mismatch: str | None

    def describe(self) -> str:
        if self.ok:
            return f"pairing ok: {self.count_x} aligned samples"
        return f"pairing FAILED: {self.first_mismatch}"


def verify_pairing(out_x, out_y) -> PairingReport:
    """Confirm two extraction outputs list identical sample-id sequences.

    Order is part of the contract: a shuffled or shifted sequence fails even
    if the id sets match.
    """
    ids_x = formats.read_sample_ids(Path(out_x) / "ids.json")
    ids_y = formats.read_sample_ids(Path(out_y) / "ids.json")
    first = None
    if len(ids_x) != len(ids_y):
        only = (set(ids_x) ^ set(ids_y)) or {"(same ids, different counts)"}
        first = f"count mismatch {len(ids_x)} vs {len(ids_y)}; e.g. {sorted(only)[0]!r}"
    else:
        for a, b in zip(ids_x, ids_y):
            if a != b:
                first = f"id {a!r} vs {b!r}"
                break
    return PairingReport(
        ok=first is None, count_x=len(ids_x), count_y=len(ids_y), first_mismatch=first
    )
