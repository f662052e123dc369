#!/usr/bin/env python3
"""Full-scale spot check: CLIP ViT-B / ViT-L on CIFAR-100.

Requires network access: the open_clip checkpoints (vitextract[openclip]) and
the CIFAR-100 images (torchvision). Exports both encoders over the train and
validation splits, assembles a ccalign manifest, and runs the baseline / PCA /
CCA comparison scoring both views. Expected outcome at full scale: CCA > PCA >
baseline for both models.

Not part of the offline acceptance gate; budget roughly an hour on CPU.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path


def export_cifar100(root: Path) -> tuple[Path, Path]:
    """Materialize CIFAR-100 as class-per-subdirectory image trees."""
    from torchvision.datasets import CIFAR100

    splits = {}
    for split, train in (("train", True), ("val", False)):
        ds = CIFAR100(str(root / "torchvision"), train=train, download=True)
        out = root / f"{split}_images"
        if not out.exists():
            for i, (image, label) in enumerate(zip(ds.data, ds.targets)):
                sub = out / f"{label:03d}_{ds.classes[label]}"
                sub.mkdir(parents=True, exist_ok=True)
                from PIL import Image

                Image.fromarray(image).save(sub / f"{i:06d}.png")
        splits[split] = out
    return splits["train"], splits["val"]


def run(cmd):
    print("+", " ".join(map(str, cmd)))
    subprocess.run([str(c) for c in cmd], check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work-dir", default="out/full_scale_cifar100")
    parser.add_argument("--batch-size", type=int, default=64)
    args = parser.parse_args()

    work = Path(args.work_dir)
    work.mkdir(parents=True, exist_ok=True)
    train_tree, val_tree = export_cifar100(work)

    for model, view in (("vit-b-clip", "x"), ("vit-l-clip", "y")):
        for split, tree in (("train", train_tree), ("val", val_tree)):
            out = work / f"{view}_{split}"
            if not (out / "embeddings.emb1").exists():
                run([sys.executable, "-m", "vitextract.cli", "extract",
                     "--model", model, "--images", tree, "--out-dir", out,
                     "--batch-size", args.batch_size])

    manifest = work / "manifest.json"
    run([sys.executable, "-m", "vitextract.cli", "make-manifest",
         "--x-train", work / "x_train", "--x-val", work / "x_val",
         "--y-train", work / "y_train", "--y-val", work / "y_val",
         "--dataset-id", "cifar100-clip-b-l", "--out", manifest])

    spec = work / "spec.json"
    spec.write_text(json.dumps({
        "schema_version": 1,
        "regime": "multi_dataset",
        "manifest": str(manifest),
        "methods": ["baseline", "pca", "cca"],
        "probe_config": "large",
        "seeds": [0, 1, 2, 3, 4],
        "score_view": "both",
    }, indent=2))
    run([sys.executable, "-m", "ccalign.cli", "experiment", "run",
         "--spec", spec, "--out", work / "report.csv", "--text", work / "report.txt"])
    print((work / "report.txt").read_text())


if __name__ == "__main__":
    main()
