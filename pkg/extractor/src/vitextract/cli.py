"""vitextract CLI: export encoder representations into ccalign datasets.

Subcommands: list-models, extract, verify-pairing, make-manifest.
Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import __version__, formats
from .encoders import POOL_MODES, load_pretrained_encoder
from .extract import extract, verify_pairing
from .registry import get_model_spec, load_registry


def cmd_list_models(args) -> int:
    registry = load_registry(args.registry)
    for spec in registry.values():
        print(json.dumps(spec.__dict__, sort_keys=True))
    return 0


def cmd_extract(args) -> int:
    spec = get_model_spec(args.model, args.registry)
    encoder = load_pretrained_encoder(spec, pool_mode=args.pool)
    summary = extract(
        spec, encoder, args.images, args.out_dir,
        batch_size=args.batch_size, precision=args.precision,
    )
    print(json.dumps({
        "model": summary.model, "dim": summary.dim, "count": summary.count,
        "num_classes": summary.num_classes, "skipped": len(summary.skipped),
        "out_dir": str(args.out_dir),
    }, sort_keys=True))
    return 0


def cmd_verify_pairing(args) -> int:
    report = verify_pairing(args.x, args.y)
    print(report.describe())
    return 0 if report.ok else 1


def cmd_make_manifest(args) -> int:
    out = Path(args.out)
    base = out.parent

    def view(train_dir, val_dir):
        train_dir, val_dir = Path(train_dir), Path(val_dir)
        info = json.loads((train_dir / "extraction.json").read_text(encoding="utf-8"))
        dims = {formats.read_embeddings_header(d / "embeddings.emb1")["dim"]
                for d in (train_dir, val_dir)}
        if len(dims) != 1:
            raise ValueError(f"train/val dims disagree: {sorted(dims)}")
        return {
            "model_id": info["model"],
            "dim": dims.pop(),
            "files": {
                "train": str((train_dir / "embeddings.emb1").resolve().relative_to(base.resolve())),
                "val": str((val_dir / "embeddings.emb1").resolve().relative_to(base.resolve())),
            },
        }, Path(train_dir), Path(val_dir)

    for pair in ((args.x_train, args.y_train), (args.x_val, args.y_val)):
        report = verify_pairing(*pair)
        if not report.ok:
            raise ValueError(f"views are not sample-aligned: {report.first_mismatch}")

    view_x, x_train, x_val = view(args.x_train, args.x_val)
    view_y, _, _ = view(args.y_train, args.y_val)

    def rel(path):
        return str(Path(path).resolve().relative_to(base.resolve()))

    formats.write_paired_manifest(
        out,
        dataset_id=args.dataset_id,
        seed=args.seed,
        view_x=view_x,
        view_y=view_y,
        labels={"train": rel(x_train / "labels.lbl1"), "val": rel(x_val / "labels.lbl1")},
        sample_ids={"train": rel(x_train / "ids.json"), "val": rel(x_val / "ids.json")},
        extras={"tool": f"vitextract {__version__}"},
    )
    print(json.dumps({"manifest": str(out)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitextract", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vitextract {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("list-models", help="print the model registry")
    p.add_argument("--registry", help="alternate registry config file")
    p.set_defaults(func=cmd_list_models)

    p = sub.add_parser("extract", help="export representations of an image tree")
    p.add_argument("--model", required=True)
    p.add_argument("--registry", help="alternate registry config file")
    p.add_argument("--images", required=True, help="root with one subdirectory per class")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pool", choices=POOL_MODES, default="all",
                   help="mean-pool all tokens or patch tokens only")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify-pairing", help="check two extractions are sample-aligned")
    p.add_argument("x")
    p.add_argument("y")
    p.set_defaults(func=cmd_verify_pairing)

    p = sub.add_parser("make-manifest", help="assemble a ccalign paired-dataset manifest")
    p.add_argument("--x-train", required=True)
    p.add_argument("--x-val", required=True)
    p.add_argument("--y-train", required=True)
    p.add_argument("--y-val", required=True)
    p.add_argument("--dataset-id", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="manifest path; data dirs must sit beneath it")
    p.set_defaults(func=cmd_make_manifest)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        func = getattr(args, "func", None)
        if func is None:
            parser.print_usage(sys.stderr)
            return 1
        return func(args)
    except SystemExit as exc:  # argparse --help / usage errors
        code = exc.code or 0
        return 1 if code == 2 else int(code)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover
        print(f"error[internal]: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
