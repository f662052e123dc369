"""Command-line interface: every pipeline stage as a subcommand.

Exit codes: 0 success, 1 user error (bad input, bad file, bad flags),
2 internal error. Every failure prints a single machine-parsable line
``error[<kind>]: <message>`` to stderr before anything else. All file paths
are explicit flags; no subcommand touches paths it was not given.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__, cca, harness, pca, probe, report, store, synth
from .errors import BadMagicError, CcalignError


class UsageError(CcalignError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on bad flags, not argparse's default 2
        raise UsageError(message)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _kind(exc: Exception) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[: -len("Error")]
    return "".join("-" + c.lower() if c.isupper() else c for c in name).lstrip("-") or "error"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    with open(args.path, "rb") as f:
        magic = f.read(4)
    if magic == store.EMB_MAGIC:
        header = store.read_embeddings_header(args.path)
        store.read_embeddings(args.path)  # full validation, including payload size
    elif magic == store.LBL_MAGIC:
        header = store.read_labels_header(args.path)
        store.read_labels(args.path)
    elif magic == cca.CCA_MAGIC:
        model = cca.read_cca_model(args.path)
        header = {
            "magic": "CCA1", "dim_x": model.dim_x, "dim_y": model.dim_y, "d": model.d,
            "fit_count": model.fit_count, "epsilon_rel": model.epsilon_rel,
        }
    elif magic == pca.PCA_MAGIC:
        model = pca.read_pca_model(args.path)
        header = {"magic": "PCA1", "dim": model.dim, "k": model.k}
    else:
        raise BadMagicError(f"{args.path}: unrecognized magic {magic!r}")
    _emit(header)
    return 0


def cmd_align(args) -> int:
    x = store.read_embeddings(args.x)
    y = store.read_embeddings(args.y)
    x_ids = store.read_sample_ids(args.x_ids)
    y_ids = store.read_sample_ids(args.y_ids)
    labels = store.read_labels(args.labels)
    ds = store.align_views(x, x_ids, y, y_ids, labels)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store.write_embeddings(ds.view_x, out / "x.emb1")
    store.write_embeddings(ds.view_y, out / "y.emb1")
    store.write_labels(ds.labels, out / "labels.lbl1")
    store.write_sample_ids(ds.sample_ids, out / "ids.json")
    _emit({
        "aligned": ds.count,
        "dropped_x": x.count - ds.count,
        "dropped_y": y.count - ds.count,
        "out_dir": str(out),
    })
    return 0


def cmd_subsample(args) -> int:
    if (args.fraction is None) == (args.ratio is None):
        raise UsageError("pass exactly one of --fraction or --ratio")
    path = Path(args.manifest)
    manifest = store.load_manifest(path)
    store.validate_manifest(manifest, path.parent)
    train = store.load_paired_split(manifest, path.parent, "train")
    val = store.load_paired_split(manifest, path.parent, "val")
    if args.fraction is not None:
        train = store.balanced_subsample(train, args.fraction, args.seed)
        op = {"op": "balanced_subsample", "fraction": args.fraction}
    else:
        # Imbalance applies to the training split only; validation keeps its
        # original distribution.
        train = store.imbalance_subsample(train, args.ratio, args.seed)
        op = {"op": "imbalance_subsample", "ratio": args.ratio}
    out_manifest = store.save_paired_dataset(
        train, val, args.out_dir,
        dataset_id=manifest.dataset_id,
        seed=args.seed,
        model_id_x=manifest.views["x"].model_id,
        model_id_y=manifest.views["y"].model_id,
        extras={**manifest.extras, "subsample": {**op, "seed": args.seed}},
    )
    _emit({"manifest": str(out_manifest), "train_count": train.count, **op})
    return 0


def cmd_fit_cca(args) -> int:
    x = store.read_embeddings(args.x)
    y = store.read_embeddings(args.y)
    model = cca.fit_cca(x, y, args.epsilon)
    cca.write_cca_model(model, args.out)
    _emit({
        "out": args.out, "d": model.d, "dim_x": model.dim_x, "dim_y": model.dim_y,
        "fit_count": model.fit_count,
        "mean_correlation": cca.mean_correlation(model, model.d),
        "rank_deficient": model.rank_deficient,
    })
    return 0


def cmd_fit_pca(args) -> int:
    x = store.read_embeddings(args.input)
    model = pca.fit_pca(x, args.k)
    pca.write_pca_model(model, args.out)
    _emit({"out": args.out, "k": model.k, "dim": model.dim})
    return 0


def cmd_project(args) -> int:
    with open(args.model, "rb") as f:
        magic = f.read(4)
    x = store.read_embeddings(args.input)
    if magic == cca.CCA_MAGIC:
        if args.view is None:
            raise UsageError("--view x|y is required for CCA models")
        model = cca.read_cca_model(args.model)
        values = cca.project_x(model, x) if args.view == "x" else cca.project_y(model, x)
    elif magic == pca.PCA_MAGIC:
        model = pca.read_pca_model(args.model)
        values = pca.project(model, x)
    else:
        raise BadMagicError(f"{args.model}: not a CCA1/PCA1 model file")
    store.write_embeddings(store.EmbeddingMatrix(values), args.out, precision=args.precision)
    _emit({"out": args.out, "dim": int(values.shape[0]), "count": int(values.shape[1])})
    return 0


def cmd_train_probe(args) -> int:
    path = Path(args.train)
    manifest = store.load_manifest(path)
    store.validate_manifest(manifest, path.parent)
    emb = store.read_embeddings(path.parent / manifest.views[args.view].files["train"])
    labels = store.read_labels(path.parent / manifest.labels["train"])
    cfg = replace(probe.default_config(args.config), seed=args.seed)
    trained = probe.train(emb.values, labels.labels, cfg, num_classes=labels.num_classes)
    probe.save_probe(trained, args.out)
    _emit({"out": args.out, "classes": trained.num_classes, "dim": trained.dim})
    return 0


def cmd_eval_probe(args) -> int:
    trained = probe.load_probe(args.probe)
    emb = store.read_embeddings(args.emb)
    labels = store.read_labels(args.labels)
    acc = probe.evaluate(trained, emb.values, labels.labels)
    _emit({"accuracy": acc, "count": emb.count})
    return 0


def cmd_experiment_run(args) -> int:
    spec = harness.spec_from_json(args.spec)
    result = harness.run_experiment(spec, threads=args.threads)
    Path(args.out).write_bytes(report.emit_report(result, "csv"))
    emitted = {"out": args.out}
    if args.text:
        Path(args.text).write_bytes(report.emit_report(result, "text"))
        emitted["text"] = args.text
    _emit(emitted)
    return 0


def cmd_synth_gen(args) -> int:
    train, val = synth.generate_preset(args.preset, args.seed)
    cfg = synth.PRESETS[args.preset]
    manifest = store.save_paired_dataset(
        train, val, args.out_dir,
        dataset_id=f"synthetic-{args.preset}",
        seed=args.seed,
        model_id_x="synth-x",
        model_id_y="synth-y",
        extras={"generator": {"preset": args.preset, "seed": args.seed, **asdict(cfg)}},
    )
    _emit({"manifest": str(manifest), "train_count": train.count, "val_count": val.count})
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ccalign", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ccalign {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--version", action="version", version=f"ccalign {__version__}")
        p.set_defaults(func=func)
        return p

    p = add("inspect", cmd_inspect, "print the validated header of a ccalign binary file")
    p.add_argument("path")

    p = add("align", cmd_align, "inner-join two views on sample ids")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--x-ids", required=True)
    p.add_argument("--y-ids", required=True)
    p.add_argument("--labels", required=True, help="labels aligned with the x ids")
    p.add_argument("--out-dir", required=True)

    p = add("subsample", cmd_subsample, "balanced or imbalance subsample of a train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--fraction", type=float, help="balanced subsample fraction in (0, 1]")
    p.add_argument("--ratio", type=float, help="imbalance ratio R >= 1 (train split only)")

    p = add("fit-cca", cmd_fit_cca, "fit canonical projections on two embedding files")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--epsilon", type=float, default=1e-6, help="relative covariance floor")
    p.add_argument("--out", required=True)

    p = add("fit-pca", cmd_fit_pca, "fit a top-k PCA model on one embedding file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("project", cmd_project, "apply a fitted CCA1/PCA1 model to an embedding file")
    p.add_argument("--model", required=True)
    p.add_argument("--view", choices=("x", "y"))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")

    p = add("train-probe", cmd_train_probe, "train a linear probe from a dataset manifest")
    p.add_argument("--train", required=True, help="dataset manifest path")
    p.add_argument("--view", choices=("x", "y"), default="x")
    p.add_argument("--config", choices=("large", "small"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = add("eval-probe", cmd_eval_probe, "evaluate a saved probe on an embedding file")
    p.add_argument("--probe", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)

    p = add("experiment", None, "run an experiment spec")
    psub = p.add_subparsers(dest="subcommand", metavar="ACTION")
    prun = psub.add_parser("run", help="run a JSON experiment spec")
    prun.add_argument("--spec", required=True)
    prun.add_argument("--out", required=True, help="CSV report path")
    prun.add_argument("--text", help="optional fixed-width text report path")
    prun.add_argument("--threads", type=int, default=1)
    prun.set_defaults(func=cmd_experiment_run)

    p = add("synth", None, "synthetic two-view data")
    psub = p.add_subparsers(dest="subcommand", metavar="ACTION")
    pgen = psub.add_parser("gen", help="generate a synthetic preset dataset")
    pgen.add_argument("--preset", choices=sorted(synth.PRESETS), required=True)
    pgen.add_argument("--seed", type=int, required=True)
    pgen.add_argument("--out-dir", required=True)
    pgen.set_defaults(func=cmd_synth_gen)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        func = getattr(args, "func", None)
        if func is None:
            raise UsageError("missing or incomplete subcommand")
        return func(args)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        print("run 'ccalign --help' for usage", file=sys.stderr)
        return 1
    except (CcalignError, OSError) as exc:
        print(f"error[{_kind(exc)}]: {exc}", file=sys.stderr)
        return 1
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error[internal]: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
