"""Writers for the ccalign on-disk interchange formats.

This is an independent implementation of the documented wire formats (see the
primary package's docs/formats.md): EMB1 embedding matrices, LBL1 label
vectors, sample-id JSON arrays, and the paired-dataset manifest. The
extractor talks to ccalign only through these files, never through its
Python API; the test suite round-trips every output through
``ccalign inspect`` to prove the contract.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
FORMAT_VERSION = 1
_EMB_HEADER = struct.Struct("<IBQQ")  # version, dtype code, dim, count
_LBL_HEADER = struct.Struct("<IQQ")  # version, num_classes, count
_DTYPE_CODES = {"f32": (1, "<f4"), "f64": (2, "<f8")}


def write_embeddings(values: np.ndarray, dest, precision: str = "f32") -> None:
    """Write a dim x count matrix sample-major; refuses non-finite values."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or min(values.shape) < 1:
        raise ValueError(f"need a nonempty dim x count matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite embedding values")
    code, dtype = _DTYPE_CODES[precision]
    d, n = values.shape
    with open(dest, "wb") as f:
        f.write(EMB_MAGIC)
        f.write(_EMB_HEADER.pack(FORMAT_VERSION, code, d, n))
        f.write(np.ascontiguousarray(values.T, dtype=dtype).tobytes())


def read_embeddings_header(src) -> dict:
    with open(src, "rb") as f:
        magic = f.read(4)
        if magic != EMB_MAGIC:
            raise ValueError(f"{src}: not an EMB1 file (magic {magic!r})")
        version, code, dim, count = _EMB_HEADER.unpack(f.read(_EMB_HEADER.size))
    return {"version": version, "dtype_code": code, "dim": dim, "count": count}


def write_labels(labels: np.ndarray, num_classes: int, dest) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size < 1:
        raise ValueError("labels must be a nonempty 1-D sequence")
    if num_classes < 2 or labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes}) with at least 2 classes")
    with open(dest, "wb") as f:
        f.write(LBL_MAGIC)
        f.write(_LBL_HEADER.pack(FORMAT_VERSION, num_classes, labels.size))
        f.write(np.ascontiguousarray(labels, dtype="<u4").tobytes())


def write_sample_ids(ids, dest) -> None:
    Path(dest).write_text(json.dumps(list(ids)), encoding="utf-8")


def read_sample_ids(src) -> list:
    return json.loads(Path(src).read_text(encoding="utf-8"))


def write_paired_manifest(
    dest,
    dataset_id: str,
    seed: int,
    view_x: dict,
    view_y: dict,
    labels: dict,
    sample_ids: dict,
    extras: dict | None = None,
) -> None:
    """Emit the paired-dataset manifest (schema v1) the ccalign harness loads.

    ``view_x``/``view_y`` are {"model_id", "dim", "files": {split: relpath}};
    ``labels``/``sample_ids`` map split names to relpaths. All paths must be
    relative to the manifest's directory.
    """
    doc = {
        "schema_version": 1,
        "dataset_id": dataset_id,
        "seed": seed,
        "views": {"x": view_x, "y": view_y},
        "labels": labels,
        "sample_ids": sample_ids,
        "extras": extras or {},
    }
    Path(dest).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
