"""Synthetic two-view datasets with shared latents and per-view nuisance.

Construction, fully determined by the seed: class centers are drawn standard
normal in a k-dimensional latent space; each sample's latent is its class
center plus noise_scale * N(0, I). View x observes A_x z in its first k
coordinates (A_x a random full-rank k x k mix) plus d_x - k independent
nuisance coordinates scaled by nuisance_scale; view y likewise with its own
mix and its own nuisance. The shared latent is therefore perfectly linearly
recoverable from both views, while the nuisance is view-private: canonical
projections keep the latent and discard the nuisance, whereas variance-ranked
selection prefers the nuisance whenever nuisance_scale dominates.

Samples are split 50/50 per class into train and validation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .rng import (
    STREAM_SYNTH_CENTERS,
    STREAM_SYNTH_LATENT_BASE,
    STREAM_SYNTH_MIX_X,
    STREAM_SYNTH_MIX_Y,
    STREAM_SYNTH_NUISANCE_X_BASE,
    STREAM_SYNTH_NUISANCE_Y_BASE,
    CounterRng,
)
from .store import EmbeddingMatrix, LabelVector, PairedDataset


@dataclass(frozen=True)
class SynthConfig:
    k_shared: int
    d_x: int
    d_y: int
    n_classes: int
    n_per_class: int  # total per class; split 50/50 into train/val
    nuisance_scale: float
    noise_scale: float


# Pinned presets. "shared8" is the configuration the acceptance suite runs:
# nuisance variance dominates the signal coordinates (36 vs ~8 per dim), but
# view x has fewer nuisance dims (28) than the projection target (32), so a
# variance-ranked baseline retains partial signal rather than none.
PRESETS = {
    "shared8": SynthConfig(
        k_shared=8,
        d_x=36,
        d_y=32,
        n_classes=10,
        n_per_class=400,
        nuisance_scale=6.0,
        noise_scale=0.55,
    ),
}


def _random_mix(rng: CounterRng, k: int) -> np.ndarray:
    # Draw until comfortably invertible; in practice the first draw is.
    for _ in range(16):
        a = rng.normal(k * k).reshape(k, k)
        if np.linalg.cond(a) < 1e6:
            return a
    raise ValidationError("could not draw a well-conditioned mixing matrix")


def gen_two_view(
    k_shared: int,
    d_x: int,
    d_y: int,
    n_classes: int,
    n_per_class: int,
    nuisance_scale: float,
    noise_scale: float,
    seed: int,
) -> tuple[PairedDataset, PairedDataset]:
    """Generate (train, val) paired datasets; see module docstring."""
    if not 1 <= k_shared <= min(d_x, d_y):
        raise ValidationError(f"need 1 <= k_shared <= min(d_x, d_y), got {k_shared}")
    if n_classes < 2:
        raise ValidationError(f"n_classes must be >= 2, got {n_classes}")
    if n_per_class < 2:
        raise ValidationError(f"n_per_class must be >= 2 to split, got {n_per_class}")
    if noise_scale <= 0 or nuisance_scale < 0:
        raise ValidationError("noise_scale must be > 0 and nuisance_scale >= 0")

    centers = (
        CounterRng(seed, STREAM_SYNTH_CENTERS).normal(n_classes * k_shared)
        .reshape(n_classes, k_shared)
    )
    mix_x = _random_mix(CounterRng(seed, STREAM_SYNTH_MIX_X), k_shared)
    mix_y = _random_mix(CounterRng(seed, STREAM_SYNTH_MIX_Y), k_shared)

    blocks_x, blocks_y, blocks_label, blocks_id = [], [], [], []
    for cls in range(n_classes):
        n = n_per_class
        latent = centers[cls][:, None] + noise_scale * (
            CounterRng(seed, STREAM_SYNTH_LATENT_BASE + cls).normal(k_shared * n)
            .reshape(k_shared, n)
        )
        nuis_x = nuisance_scale * (
            CounterRng(seed, STREAM_SYNTH_NUISANCE_X_BASE + cls).normal((d_x - k_shared) * n)
            .reshape(d_x - k_shared, n)
        )
        nuis_y = nuisance_scale * (
            CounterRng(seed, STREAM_SYNTH_NUISANCE_Y_BASE + cls).normal((d_y - k_shared) * n)
            .reshape(d_y - k_shared, n)
        )
        blocks_x.append(np.vstack([mix_x @ latent, nuis_x]))
        blocks_y.append(np.vstack([mix_y @ latent, nuis_y]))
        blocks_label.append(np.full(n, cls, dtype=np.int64))
        blocks_id.append(np.array([f"c{cls:03d}-{j:05d}" for j in range(n)]))

    half = n_per_class // 2

    def assemble(sl: slice) -> PairedDataset:
        return PairedDataset(
            view_x=EmbeddingMatrix(np.hstack([b[:, sl] for b in blocks_x])),
            view_y=EmbeddingMatrix(np.hstack([b[:, sl] for b in blocks_y])),
            labels=LabelVector(np.concatenate([b[sl] for b in blocks_label]), n_classes),
            sample_ids=np.concatenate([b[sl] for b in blocks_id]),
        )

    return assemble(slice(0, half)), assemble(slice(half, n_per_class))


def generate_preset(name: str, seed: int) -> tuple[PairedDataset, PairedDataset]:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return gen_two_view(seed=seed, **asdict(PRESETS[name]))
