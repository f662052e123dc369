#!/usr/bin/env python3
"""Sweep training-set imbalance on the synthetic preset and report the decline.

The validation split keeps its original (balanced) distribution; only the
training split is resampled to each requested max/min class ratio.
"""

import argparse
from pathlib import Path

from ccalign.harness import ExperimentSpec, run_imbalance_sweep
from ccalign.report import emit_report
from ccalign.synth import generate_preset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="shared8")
    parser.add_argument("--seed", type=int, default=42, help="generator seed")
    parser.add_argument("--ratios", type=float, nargs="+", default=[1, 2, 4, 8, 16])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--methods", nargs="+", default=["baseline", "pca", "cca"])
    parser.add_argument("--out-dir", default="out/imbalance_sweep")
    args = parser.parse_args()

    train, val = generate_preset(args.preset, seed=args.seed)
    spec = ExperimentSpec(
        regime="imbalance_sweep",
        methods=tuple(args.methods),
        seeds=tuple(args.seeds),
        ratios=tuple(args.ratios),
        label_x=f"{args.preset}-x",
        label_y=f"{args.preset}-y",
    )
    report = run_imbalance_sweep(spec, data=(train, val))

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_bytes(emit_report(report, "csv"))
    text = emit_report(report, "text")
    (out / "report.txt").write_bytes(text)
    print(text.decode("utf-8"))


if __name__ == "__main__":
    main()
