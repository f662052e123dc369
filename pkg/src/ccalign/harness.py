"""Experiment orchestration: comparisons, imbalance and fraction sweeps.

A spec is data, not code: the comparison regimes (dimensionality reduction,
fixed-dimension refinement, fine-tune structure transfer, multi-dataset) all
run the same pipeline — fit transforms on the training split only, project
train and validation, train a seeded probe, evaluate — and differ only in
which datasets are ingested and which view is scored.

Train/validation hygiene is enforced by construction: fitted transforms carry
a fingerprint of the matrix they were fitted on, and this module refuses to
proceed if a transform's fingerprint is not the training split's.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import cca as cca_mod
from . import pca as pca_mod
from . import probe as probe_mod
from .errors import CcalignError, ValidationError
from .report import DimRecord, Report, TrialRow
from .store import (
    PairedDataset,
    balanced_subsample,
    data_fingerprint,
    imbalance_class_sizes,
    imbalance_subsample,
    load_manifest,
    load_paired_split,
    validate_manifest,
)

COMPARISON_REGIMES = ("reduce_dim", "same_dim_refine", "finetune_transfer", "multi_dataset")
SWEEP_REGIMES = ("imbalance_sweep", "fraction_sweep")
ALL_REGIMES = COMPARISON_REGIMES + SWEEP_REGIMES
ALL_METHODS = ("baseline", "pca", "cca")

SPEC_SCHEMA_VERSION = 1

IMBALANCE_PROFILE = "geometric: n_c = floor(n * R^(-c/(C-1)) + 0.5)"


@dataclass(frozen=True)
class ExperimentSpec:
    regime: str
    manifest: str | None = None
    methods: tuple = ALL_METHODS
    probe_config: str = "large"
    seeds: tuple = (0, 1, 2, 3, 4)
    epsilon_rel: float = 1e-6
    score_view: str = "x"
    ratios: tuple | None = None
    fractions: tuple | None = None
    label_x: str | None = None
    label_y: str | None = None
    probe_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in ALL_REGIMES:
            raise ValidationError(f"unknown regime {self.regime!r}; choose from {ALL_REGIMES}")
        methods = tuple(m for m in ALL_METHODS if m in self.methods)
        if set(self.methods) - set(ALL_METHODS):
            raise ValidationError(f"unknown methods {set(self.methods) - set(ALL_METHODS)}")
        object.__setattr__(self, "methods", methods)
        if not self.seeds:
            raise ValidationError("seeds must be nonempty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.score_view not in ("x", "y", "both"):
            raise ValidationError(f"score_view must be x, y or both, got {self.score_view!r}")
        if self.epsilon_rel <= 0:
            raise ValidationError(f"epsilon_rel must be > 0, got {self.epsilon_rel}")
        if self.regime == "imbalance_sweep":
            if not self.ratios:
                raise ValidationError("imbalance_sweep requires a nonempty ratios list")
            ratios = tuple(float(r) for r in self.ratios)
            if len(set(ratios)) != len(ratios):
                raise ValidationError("duplicate ratios")
            if any(r < 1.0 for r in ratios):
                raise ValidationError("ratios must be >= 1")
            object.__setattr__(self, "ratios", ratios)
        if self.regime == "fraction_sweep":
            if not self.fractions:
                raise ValidationError("fraction_sweep requires a nonempty fractions list")
            fractions = tuple(float(f) for f in self.fractions)
            if len(set(fractions)) != len(fractions):
                raise ValidationError("duplicate fractions")
            if any(not 0.0 < f <= 1.0 for f in fractions):
                raise ValidationError("fractions must lie in (0, 1]")
            object.__setattr__(self, "fractions", fractions)
        overrides = dict(self.probe_overrides)
        allowed = {f.name for f in fields(probe_mod.TrainConfig)} - {"seed"}
        if set(overrides) - allowed:
            raise ValidationError(f"unknown probe overrides {sorted(set(overrides) - allowed)}")
        object.__setattr__(self, "probe_overrides", overrides)


def spec_from_json(path) -> ExperimentSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: spec is not valid JSON: {exc}") from exc
    if doc.pop("schema_version", SPEC_SCHEMA_VERSION) != SPEC_SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported spec schema version")
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"{path}: unknown spec fields {sorted(unknown)}")
    for key in ("methods", "seeds", "ratios", "fractions"):
        if key in doc and doc[key] is not None:
            doc[key] = tuple(doc[key])
    return ExperimentSpec(**doc)


def spec_to_json(spec: ExperimentSpec) -> str:
    doc = {"schema_version": SPEC_SCHEMA_VERSION}
    for f in fields(ExperimentSpec):
        value = getattr(spec, f.name)
        doc[f.name] = list(value) if isinstance(value, tuple) else value
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _probe_cfg(spec: ExperimentSpec, seed: int) -> probe_mod.TrainConfig:
    cfg = probe_mod.default_config(spec.probe_config)
    return replace(cfg, seed=seed, **spec.probe_overrides)


def _score_views(spec: ExperimentSpec) -> tuple[str, ...]:
    return ("x", "y") if spec.score_view == "both" else (spec.score_view,)


def _require_fit_on_train(fitted_fp: str | None, train_fp: str, what: str) -> None:
    if fitted_fp != train_fp:
        raise CcalignError(
            f"train/val hygiene violation: {what} was not fitted on the training split"
        )


def _build_projections(train: PairedDataset, val: PairedDataset, spec: ExperimentSpec):
    """Fit requested transforms on train only; return per-(method, view) matrices."""
    views = _score_views(spec)
    target_d = min(train.view_x.dim, train.view_y.dim)
    train_fp = {
        "x": data_fingerprint(train.view_x.values),
        "y": data_fingerprint(train.view_y.values),
    }
    projections = {}
    rank_warnings = []
    for method in spec.methods:
        if method == "baseline":
            for view in views:
                tr = getattr(train, f"view_{view}")
                va = getattr(val, f"view_{view}")
                projections[(method, view)] = (tr.values, va.values, tr.dim)
        elif method == "pca":
            for view in views:
                tr = getattr(train, f"view_{view}")
                va = getattr(val, f"view_{view}")
                model = pca_mod.fit_pca(tr.values, target_d)
                _require_fit_on_train(model.fit_fingerprint, train_fp[view], f"pca[{view}]")
                projections[(method, view)] = (
                    pca_mod.project(model, tr.values),
                    pca_mod.project(model, va.values),
                    target_d,
                )
        elif method == "cca":
            model = cca_mod.fit_cca(train.view_x.values, train.view_y.values, spec.epsilon_rel)
            _require_fit_on_train(model.whiten_x.fit_fingerprint, train_fp["x"], "cca[x]")
            _require_fit_on_train(model.whiten_y.fit_fingerprint, train_fp["y"], "cca[y]")
            if model.rank_deficient:
                rank_warnings.append("cca fit is rank-deficient (N-1 < max view dim)")
            proj = {"x": cca_mod.project_x, "y": cca_mod.project_y}
            for view in views:
                tr = getattr(train, f"view_{view}")
                va = getattr(val, f"view_{view}")
                projections[(method, view)] = (
                    proj[view](model, tr.values),
                    proj[view](model, va.values),
                    target_d,
                )
    return projections, rank_warnings, train_fp


def _comparison_rows(
    train: PairedDataset,
    val: PairedDataset,
    spec: ExperimentSpec,
    seeds,
    sweep_param=None,
    threads: int = 1,
):
    projections, rank_warnings, train_fp = _build_projections(train, val, spec)
    views = _score_views(spec)
    num_classes = train.labels.num_classes

    cells = [
        (method, view, seed)
        for method in spec.methods
        for view in views
        for seed in seeds
    ]

    def run_cell(cell):
        method, view, seed = cell
        train_mat, val_mat, _ = projections[(method, view)]
        probe = probe_mod.train(
            train_mat, train.labels.labels, _probe_cfg(spec, seed), num_classes=num_classes
        )
        acc = probe_mod.evaluate(probe, val_mat, val.labels.labels)
        return TrialRow(method=method, view=view, seed=seed, accuracy=acc, sweep_param=sweep_param)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    dims = [
        DimRecord(
            method=method,
            view=view,
            orig_dim=getattr(train, f"view_{view}").dim,
            proj_dim=projections[(method, view)][2],
        )
        for method in spec.methods
        for view in views
    ]
    return rows, dims, rank_warnings, train_fp


def _load_data(spec: ExperimentSpec) -> tuple[PairedDataset, PairedDataset, dict]:
    if spec.manifest is None:
        raise ValidationError("spec has no manifest and no in-memory data was supplied")
    path = Path(spec.manifest)
    manifest = load_manifest(path)
    validate_manifest(manifest, path.parent)
    train = load_paired_split(manifest, path.parent, "train")
    val = load_paired_split(manifest, path.parent, "val")
    meta = {
        "dataset_id": manifest.dataset_id,
        "label_x": manifest.views["x"].model_id,
        "label_y": manifest.views["y"].model_id,
    }
    return train, val, meta


def _base_provenance(spec: ExperimentSpec, train, val, extra=None) -> dict:
    prov = {
        "epsilon_rel": spec.epsilon_rel,
        "probe_config": spec.probe_config,
        "seeds": ";".join(str(s) for s in spec.seeds),
        "methods": ";".join(spec.methods),
        "score_view": spec.score_view,
        "train_count": train.count,
        "val_count": val.count,
        "imbalance_profile": IMBALANCE_PROFILE,
    }
    if spec.probe_overrides:
        prov["probe_overrides"] = json.dumps(spec.probe_overrides, sort_keys=True)
    if extra:
        prov.update(extra)
    return prov


def _resolve(spec, data):
    if data is not None:
        train, val = data
        meta = {"dataset_id": "in-memory", "label_x": "view-x", "label_y": "view-y"}
    else:
        train, val, meta = _load_data(spec)
    label_x = spec.label_x or meta["label_x"]
    label_y = spec.label_y or meta["label_y"]
    return train, val, meta["dataset_id"], label_x, label_y


def run_comparison(spec: ExperimentSpec, data=None, threads: int = 1) -> Report:
    """Baseline / PCA / CCA accuracy comparison on one paired dataset."""
    train, val, dataset_id, label_x, label_y = _resolve(spec, data)
    rows, dims, rank_warnings, train_fp = _comparison_rows(
        train, val, spec, spec.seeds, threads=threads
    )
    prov = _base_provenance(spec, train, val, {
        "dataset_id": dataset_id,
        "rank_warnings": ";".join(rank_warnings) or "none",
        "train_fingerprint_x": train_fp["x"],
        "train_fingerprint_y": train_fp["y"],
    })
    return Report(
        regime=spec.regime, label_x=label_x, label_y=label_y,
        rows=rows, dims=dims, provenance=prov,
    )


def run_imbalance_sweep(spec: ExperimentSpec, data=None, threads: int = 1) -> Report:
    """Accuracy-vs-imbalance-ratio series; validation split is never resampled."""
    train, val, dataset_id, label_x, label_y = _resolve(spec, data)
    counts = train.labels.class_counts()
    if np.any(counts != counts[0]):
        raise ValidationError("imbalance sweep requires a balanced base training set")
    base = int(counts[0])

    all_rows, warnings_seen = [], []
    dims = []
    realized = {}
    for ratio in spec.ratios:
        sizes = imbalance_class_sizes(base, train.labels.num_classes, ratio)
        realized[f"{ratio:g}"] = round(float(sizes[0] / sizes[-1]), 6)
        for seed in spec.seeds:
            sub = imbalance_subsample(train, ratio, seed)
            rows, dims, rank_warnings, _ = _comparison_rows(
                sub, val, spec, [seed], sweep_param=ratio, threads=threads
            )  # dims are identical across cells; keep the last
            all_rows.extend(rows)
            warnings_seen.extend(rank_warnings)
    prov = _base_provenance(spec, train, val, {
        "dataset_id": dataset_id,
        "ratios": ";".join(f"{r:g}" for r in spec.ratios),
        "realized_ratios": json.dumps(realized, sort_keys=True),
        "rank_warnings": ";".join(sorted(set(warnings_seen))) or "none",
    })
    return Report(
        regime=spec.regime, label_x=label_x, label_y=label_y,
        rows=all_rows, dims=dims, provenance=prov,
    )


def run_fraction_sweep(spec: ExperimentSpec, data=None, threads: int = 1) -> Report:
    """Baseline accuracy per view as a function of the balanced train fraction."""
    train, val, dataset_id, label_x, label_y = _resolve(spec, data)
    base_spec = replace(spec, methods=("baseline",), score_view="both")
    all_rows = []
    dims = []
    for fraction in spec.fractions:
        for seed in spec.seeds:
            sub = balanced_subsample(train, fraction, seed)
            rows, dims, _, _ = _comparison_rows(
                sub, val, base_spec, [seed], sweep_param=fraction, threads=threads
            )  # dims are identical across cells; keep the last
            all_rows.extend(rows)
    prov = _base_provenance(spec, train, val, {
        "dataset_id": dataset_id,
        "fractions": ";".join(f"{f:g}" for f in spec.fractions),
        "rank_warnings": "none",
    })
    return Report(
        regime=spec.regime, label_x=label_x, label_y=label_y,
        rows=all_rows, dims=dims, provenance=prov,
    )


def run_experiment(spec: ExperimentSpec, data=None, threads: int = 1) -> Report:
    if spec.regime in COMPARISON_REGIMES:
        return run_comparison(spec, data=data, threads=threads)
    if spec.regime == "imbalance_sweep":
        return run_imbalance_sweep(spec, data=data, threads=threads)
    return run_fraction_sweep(spec, data=data, threads=threads)


# ---------------------------------------------------------------------------
# Capacity-ratio aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImprovementRow:
    backbone: str
    partner: str
    param_ratio: float
    accuracy_delta: float  # mean cca accuracy minus mean baseline accuracy


def improvement_table(reports: list[Report], param_counts: dict) -> list[ImprovementRow]:
    """CCA-minus-baseline deltas against backbone/partner parameter ratio.

    Reports must share a regime and score view x; ``param_counts`` maps model
    labels to parameter counts (any consistent unit).
    """
    if not reports:
        raise ValidationError("improvement_table needs at least one report")
    regimes = {r.regime for r in reports}
    if len(regimes) != 1:
        raise ValidationError(f"reports mix regimes: {sorted(regimes)}")
    rows = []
    for rep in reports:
        for label in (rep.label_x, rep.label_y):
            if label not in param_counts:
                raise ValidationError(f"missing parameter count for model {label!r}")
        delta = rep.mean_accuracy("cca", "x") - rep.mean_accuracy("baseline", "x")
        rows.append(
            ImprovementRow(
                backbone=rep.label_x,
                partner=rep.label_y,
                param_ratio=float(param_counts[rep.label_x] / param_counts[rep.label_y]),
                accuracy_delta=float(delta),
            )
        )
    rows.sort(key=lambda r: (r.param_ratio, r.backbone, r.partner))
    return rows


def format_improvement_table(rows: list[ImprovementRow]) -> str:
    lines = ["backbone,partner,param_ratio,cca_minus_baseline"]
    for row in rows:
        lines.append(
            f"{row.backbone},{row.partner},{row.param_ratio!r},{row.accuracy_delta!r}"
        )
    return "\n".join(lines) + "\n"
