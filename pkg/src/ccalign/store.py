"""On-disk formats, ingestion, sample alignment, and subsampling protocols.

Binary layouts (full byte-level description in docs/formats.md):

``EMB1``  magic ``b"EMB1"``, u32 version (=1), u8 dtype code (1=f32, 2=f64),
          u64 dim, u64 count, then count*dim values little-endian,
          sample-major (all values of sample 0, then sample 1, ...).
``LBL1``  magic ``b"LBL1"``, u32 version (=1), u64 num_classes, u64 count,
          then count little-endian u32 class indices.

All integers are little-endian. A paired dataset on disk is tied together by
a UTF-8 JSON manifest (schema below, and in docs/formats.md) naming the
embedding files per view, the label files, and the sample-id files per split.

Matrices are dim x count in memory ("columns are samples") and always float64
internally regardless of on-disk precision.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    TruncatedFileError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    ValidationError,
)
from .rng import (
    STREAM_BALANCED_SUBSAMPLE,
    STREAM_IMBALANCE_SUBSAMPLE,
    CounterRng,
)

logger = logging.getLogger(__name__)

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
FORMAT_VERSION = 1
_EMB_HEADER = struct.Struct("<IBQQ")  # version, dtype code, dim, count
_LBL_HEADER = struct.Struct("<IQQ")  # version, num_classes, count

_DTYPE_CODES = {"f32": 1, "f64": 2}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}

MANIFEST_SCHEMA_VERSION = 1
SPLITS = ("train", "val")


def matrix_values(x) -> np.ndarray:
    """Accept an EmbeddingMatrix or a bare dim x count array; return float64 values."""
    values = x.values if isinstance(x, EmbeddingMatrix) else np.asarray(x, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError(f"expected a 2-D dim x count matrix, got shape {values.shape}")
    return values


def data_fingerprint(values: np.ndarray) -> str:
    """Stable short hash of a matrix's shape and float64 contents.

    Fitted transforms carry this so downstream code can prove they were fitted
    on training data and never on validation data.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    h = hashlib.sha256()
    h.update(struct.pack("<QQ", *values.shape))
    h.update(values.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class EmbeddingMatrix:
    """A dim x count matrix of representations, one sample per column."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {values.shape}")
        d, n = values.shape
        if d < 1 or n < 1:
            raise ValidationError(f"embedding matrix must be at least 1x1, got {d}x{n}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("embedding matrix contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Class indices in [0, num_classes) for a sample-aligned dataset."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size < 1:
            raise ValidationError("labels must be a non-empty 1-D sequence")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.labels.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class PairedDataset:
    """Two sample-aligned views of the same inputs, plus labels and stable ids."""

    view_x: EmbeddingMatrix
    view_y: EmbeddingMatrix
    labels: LabelVector
    sample_ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.sample_ids)
        n = self.view_x.count
        if self.view_y.count != n or self.labels.count != n or ids.shape != (n,):
            raise ValidationError(
                "paired dataset misaligned: "
                f"x={self.view_x.count}, y={self.view_y.count}, "
                f"labels={self.labels.count}, ids={ids.shape}"
            )
        if np.unique(ids).size != n:
            raise ValidationError("sample_ids must be unique")
        object.__setattr__(self, "sample_ids", ids)

    @property
    def count(self) -> int:
        return self.view_x.count

    def take(self, indices: np.ndarray) -> "PairedDataset":
        """Subset both views, labels and ids by the same index vector."""
        idx = np.asarray(indices, dtype=np.int64)
        return PairedDataset(
            view_x=EmbeddingMatrix(self.view_x.values[:, idx]),
            view_y=EmbeddingMatrix(self.view_y.values[:, idx]),
            labels=LabelVector(self.labels.labels[idx], self.labels.num_classes),
            sample_ids=self.sample_ids[idx],
        )


# ---------------------------------------------------------------------------
# EMB1 / LBL1 files
# ---------------------------------------------------------------------------


def write_embeddings(matrix, dest, precision: str = "f64") -> None:
    """Write a matrix as an EMB1 file at the requested precision."""
    if precision not in _DTYPE_CODES:
        raise ValidationError(f"precision must be one of {sorted(_DTYPE_CODES)}, got {precision!r}")
    m = matrix if isinstance(matrix, EmbeddingMatrix) else EmbeddingMatrix(np.asarray(matrix))
    code = _DTYPE_CODES[precision]
    payload = np.ascontiguousarray(m.values.T, dtype=_CODE_DTYPES[code])
    with open(dest, "wb") as f:
        f.write(EMB_MAGIC)
        f.write(_EMB_HEADER.pack(FORMAT_VERSION, code, m.dim, m.count))
        f.write(payload.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) < n:
        raise TruncatedFileError(f"file ends inside {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_emb_header(f, path) -> tuple[int, np.dtype, int, int]:
    magic = f.read(4)
    if magic != EMB_MAGIC:
        raise BadMagicError(f"{path}: expected magic {EMB_MAGIC!r}, found {magic!r}")
    version, code, dim, count = _EMB_HEADER.unpack(_read_exact(f, _EMB_HEADER.size, "EMB1 header"))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: EMB1 version {version} not supported")
    if code not in _CODE_DTYPES:
        raise UnsupportedDtypeError(f"{path}: unknown dtype code {code}")
    if dim < 1 or count < 1:
        raise ValidationError(f"{path}: header declares empty matrix {dim}x{count}")
    return version, _CODE_DTYPES[code], dim, count


def read_embeddings_header(src) -> dict:
    """Validate and return the header of an EMB1 file without loading values."""
    with open(src, "rb") as f:
        version, dtype, dim, count = _read_emb_header(f, src)
    name = "f32" if dtype.itemsize == 4 else "f64"
    return {"magic": "EMB1", "version": version, "dtype": name, "dim": dim, "count": count}


def read_embeddings(src) -> EmbeddingMatrix:
    """Read an EMB1 file back into a float64 dim x count matrix."""
    with open(src, "rb") as f:
        _, dtype, dim, count = _read_emb_header(f, src)
        payload = _read_exact(f, dim * count * dtype.itemsize, "EMB1 payload")
    flat = np.frombuffer(payload, dtype=dtype)
    return EmbeddingMatrix(flat.reshape(count, dim).T)


def write_labels(labels: LabelVector, dest) -> None:
    """Write a LabelVector as an LBL1 file."""
    with open(dest, "wb") as f:
        f.write(LBL_MAGIC)
        f.write(_LBL_HEADER.pack(FORMAT_VERSION, labels.num_classes, labels.count))
        f.write(np.ascontiguousarray(labels.labels, dtype="<u4").tobytes())


def read_labels_header(src) -> dict:
    with open(src, "rb") as f:
        magic = f.read(4)
        if magic != LBL_MAGIC:
            raise BadMagicError(f"{src}: expected magic {LBL_MAGIC!r}, found {magic!r}")
        version, num_classes, count = _LBL_HEADER.unpack(
            _read_exact(f, _LBL_HEADER.size, "LBL1 header")
        )
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{src}: LBL1 version {version} not supported")
    return {"magic": "LBL1", "version": version, "num_classes": num_classes, "count": count}


def read_labels(src) -> LabelVector:
    header = read_labels_header(src)
    with open(src, "rb") as f:
        f.seek(4 + _LBL_HEADER.size)
        payload = _read_exact(f, header["count"] * 4, "LBL1 payload")
    labels = np.frombuffer(payload, dtype="<u4").astype(np.int64)
    return LabelVector(labels, header["num_classes"])


def write_sample_ids(ids: np.ndarray, dest) -> None:
    Path(dest).write_text(json.dumps(np.asarray(ids).tolist()), encoding="utf-8")


def read_sample_ids(src) -> np.ndarray:
    return np.asarray(json.loads(Path(src).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Subsampling and alignment
# ---------------------------------------------------------------------------


def balanced_subsample(ds: PairedDataset, fraction: float, seed: int) -> PairedDataset:
    """Class-balanced subset: floor(fraction * N / C) samples per class.

    Selection is uniform without replacement within each class and identical
    across both views; the chosen indices are returned in ascending original
    order, so fraction 1.0 on balanced data reproduces the input exactly.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    c = ds.labels.num_classes
    m = int(math.floor(fraction * ds.count / c))
    need = int(math.ceil(fraction * ds.count / c))
    if m < 1:
        raise ValidationError(f"fraction {fraction} yields an empty per-class quota")
    rng = CounterRng(seed, stream=STREAM_BALANCED_SUBSAMPLE)
    chosen = []
    for cls in range(c):
        members = np.nonzero(ds.labels.labels == cls)[0]
        if members.size < need:
            raise ValidationError(f"class {cls} has {members.size} samples, need {need}")
        chosen.append(members[rng.subset(members.size, m)])
    idx = np.sort(np.concatenate(chosen))
    return ds.take(idx)


def imbalance_class_sizes(base: int, num_classes: int, ratio: float) -> np.ndarray:
    """Geometric long-tail profile: class c keeps round(base * ratio^(-c/(C-1))).

    Rounding is half-up (floor(x + 0.5)), so the profile is reproducible in
    any language. The realized max/min ratio is base / sizes[-1].
    """
    if ratio < 1.0:
        raise ValidationError(f"ratio must be >= 1, got {ratio}")
    if num_classes < 2:
        raise ValidationError("imbalance profile needs at least 2 classes")
    exponents = -np.arange(num_classes, dtype=np.float64) / (num_classes - 1)
    sizes = np.floor(base * ratio**exponents + 0.5).astype(np.int64)
    if sizes.min() < 1:
        raise ValidationError(
            f"ratio {ratio} drives the smallest class below one sample (base {base})"
        )
    return sizes


def imbalance_subsample(ds: PairedDataset, ratio: float, seed: int) -> PairedDataset:
    """Subsample a balanced dataset to a geometric imbalance profile.

    Class c (0-indexed) keeps round(n * ratio^(-c/(C-1))) of its n samples, so
    the realized most/least frequent ratio matches ``ratio`` up to rounding.
    Ratio 1 reproduces the input exactly. Never apply this to validation data.
    """
    counts = ds.labels.class_counts()
    if np.any(counts != counts[0]):
        raise ValidationError(f"imbalance_subsample needs balanced input, got counts {counts.tolist()}")
    sizes = imbalance_class_sizes(int(counts[0]), ds.labels.num_classes, ratio)
    rng = CounterRng(seed, stream=STREAM_IMBALANCE_SUBSAMPLE)
    chosen = []
    for cls, m in enumerate(sizes):
        members = np.nonzero(ds.labels.labels == cls)[0]
        chosen.append(members[rng.subset(members.size, int(m))])
    idx = np.sort(np.concatenate(chosen))
    return ds.take(idx)


def align_views(x, x_ids, y, y_ids, labels: LabelVector) -> PairedDataset:
    """Inner-join two views on sample ids, in ascending id order.

    ``labels`` is aligned with ``x_ids``. Samples present in only one view are
    dropped with a warning, never an error, because real extraction pipelines
    lose samples.
    """
    x = x if isinstance(x, EmbeddingMatrix) else EmbeddingMatrix(np.asarray(x))
    y = y if isinstance(y, EmbeddingMatrix) else EmbeddingMatrix(np.asarray(y))
    x_ids = np.asarray(x_ids)
    y_ids = np.asarray(y_ids)
    if x_ids.shape != (x.count,) or y_ids.shape != (y.count,):
        raise ValidationError("id sequences must match their view's sample count")
    if labels.count != x.count:
        raise ValidationError("labels must be aligned with view x ids")
    for name, ids in (("x", x_ids), ("y", y_ids)):
        if np.unique(ids).size != ids.size:
            raise ValidationError(f"duplicate sample ids in view {name}")
    common, x_idx, y_idx = np.intersect1d(x_ids, y_ids, return_indices=True)
    if common.size == 0:
        raise ValidationError("views share no sample ids")
    dropped = (x.count - common.size) + (y.count - common.size)
    if dropped:
        logger.warning(
            "align_views dropped %d unmatched samples (x: %d, y: %d)",
            dropped, x.count - common.size, y.count - common.size,
        )
    return PairedDataset(
        view_x=EmbeddingMatrix(x.values[:, x_idx]),
        view_y=EmbeddingMatrix(y.values[:, y_idx]),
        labels=LabelVector(labels.labels[x_idx], labels.num_classes),
        sample_ids=common,
    )


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass
class ManifestView:
    model_id: str
    dim: int
    files: dict  # split -> embedding file path (relative to the manifest)


@dataclass
class Manifest:
    """JSON description of a paired dataset on disk (schema v1).

    ::

        {
          "schema_version": 1,
          "dataset_id": "...", "seed": 0,
          "views":  {"x": {"model_id": "...", "dim": 36,
                           "files": {"train": "x_train.emb1", "val": "x_val.emb1"}},
                     "y": {...}},
          "labels": {"train": "train.lbl1", "val": "val.lbl1"},
          "sample_ids": {"train": "train_ids.json", "val": "val_ids.json"},
          "extras": {...}
        }

    All paths are relative to the manifest's directory.
    """

    dataset_id: str
    seed: int
    views: dict
    labels: dict
    sample_ids: dict
    extras: dict = field(default_factory=dict)

    def view_names(self) -> list[str]:
        return sorted(self.views)


def save_manifest(manifest: Manifest, dest) -> None:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "dataset_id": manifest.dataset_id,
        "seed": manifest.seed,
        "views": {
            name: {"model_id": v.model_id, "dim": v.dim, "files": v.files}
            for name, v in manifest.views.items()
        },
        "labels": manifest.labels,
        "sample_ids": manifest.sample_ids,
        "extras": manifest.extras,
    }
    Path(dest).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(src) -> Manifest:
    try:
        doc = json.loads(Path(src).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{src}: manifest is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise UnsupportedVersionError(
            f"{src}: manifest schema {doc.get('schema_version')!r} not supported"
        )
    try:
        views = {
            name: ManifestView(model_id=v["model_id"], dim=int(v["dim"]), files=dict(v["files"]))
            for name, v in doc["views"].items()
        }
        manifest = Manifest(
            dataset_id=doc["dataset_id"],
            seed=int(doc["seed"]),
            views=views,
            labels=dict(doc["labels"]),
            sample_ids=dict(doc["sample_ids"]),
            extras=dict(doc.get("extras", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{src}: manifest is missing required field: {exc}") from exc
    return manifest


def validate_manifest(manifest: Manifest, base_dir) -> None:
    """Check every referenced file exists and headers match declared dims."""
    base = Path(base_dir)
    for name, view in manifest.views.items():
        for split, rel in view.files.items():
            path = base / rel
            if not path.exists():
                raise ValidationError(f"manifest view {name}/{split}: missing file {path}")
            header = read_embeddings_header(path)
            if header["dim"] != view.dim:
                raise ValidationError(
                    f"manifest view {name}/{split}: declared dim {view.dim}, "
                    f"file has {header['dim']}"
                )
    for split, rel in manifest.labels.items():
        path = base / rel
        if not path.exists():
            raise ValidationError(f"manifest labels/{split}: missing file {path}")
        read_labels_header(path)
    for split, rel in manifest.sample_ids.items():
        if not (base / rel).exists():
            raise ValidationError(f"manifest sample_ids/{split}: missing file {base / rel}")


def load_paired_split(manifest: Manifest, base_dir, split: str) -> PairedDataset:
    """Materialize one split of a two-view manifest as a PairedDataset."""
    base = Path(base_dir)
    for required in ("x", "y"):
        if required not in manifest.views:
            raise ValidationError(f"manifest lacks view {required!r}")
    x = read_embeddings(base / manifest.views["x"].files[split])
    y = read_embeddings(base / manifest.views["y"].files[split])
    labels = read_labels(base / manifest.labels[split])
    if split in manifest.sample_ids:
        ids = read_sample_ids(base / manifest.sample_ids[split])
    else:
        ids = np.arange(x.count)
    return PairedDataset(view_x=x, view_y=y, labels=labels, sample_ids=ids)


def save_paired_dataset(
    train: PairedDataset,
    val: PairedDataset,
    out_dir,
    dataset_id: str,
    seed: int,
    model_id_x: str = "view-x",
    model_id_y: str = "view-y",
    extras: dict | None = None,
    precision: str = "f64",
) -> Path:
    """Write both splits of a paired dataset plus a manifest; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"x": {}, "y": {}}
    labels = {}
    ids = {}
    for split, ds in (("train", train), ("val", val)):
        for view, matrix in (("x", ds.view_x), ("y", ds.view_y)):
            rel = f"{view}_{split}.emb1"
            write_embeddings(matrix, out / rel, precision=precision)
            files[view][split] = rel
        labels[split] = f"{split}.lbl1"
        write_labels(ds.labels, out / labels[split])
        ids[split] = f"{split}_ids.json"
        write_sample_ids(ds.sample_ids, out / ids[split])
    manifest = Manifest(
        dataset_id=dataset_id,
        seed=seed,
        views={
            "x": ManifestView(model_id=model_id_x, dim=train.view_x.dim, files=files["x"]),
            "y": ManifestView(model_id=model_id_y, dim=train.view_y.dim, files=files["y"]),
        },
        labels=labels,
        sample_ids=ids,
        extras=extras or {},
    )
    path = out / "manifest.json"
    save_manifest(manifest, path)
    return path
