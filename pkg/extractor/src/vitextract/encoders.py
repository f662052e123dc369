"""Encoder wrappers: frozen torch modules exposed through one embed() surface.

Two shapes of encoder exist in the registry:

* standard ViTs expose token outputs of the last attention block; we
  mean-pool them (all tokens by default, or patch tokens only via
  ``pool_mode="patch"``, since the class token's inclusion is a choice);
* CLIP-style encoders are exported post-projection-head, so the module
  already yields one vector per image.

l2 normalization happens downstream in the extraction loop, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

POOL_MODES = ("all", "patch")


@dataclass(frozen=True)
class Preprocess:
    """Inference-time preprocessing constants published with a checkpoint."""

    size: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __call__(self, image) -> torch.Tensor:
        from PIL import Image

        if image.mode != "RGB":
            image = image.convert("RGB")
        image = image.resize((self.size, self.size), Image.BICUBIC)
        array = np.asarray(image, dtype=np.float32) / 255.0
        array = (array - np.array(self.mean, dtype=np.float32)) / np.array(
            self.std, dtype=np.float32
        )
        return torch.from_numpy(array).permute(2, 0, 1)

    def describe(self) -> dict:
        return {"resize": self.size, "mean": list(self.mean), "std": list(self.std)}


IMAGENET_PREPROCESS = Preprocess(224, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
CLIP_PREPROCESS = Preprocess(
    224,
    (0.48145466, 0.4578275, 0.40821073),
    (0.26862954, 0.26130258, 0.27577711),
)


class TokenPoolingEncoder:
    """Mean-pool the (batch, tokens, dim) output of a ViT's last block."""

    def __init__(self, module, preprocess: Preprocess, pool_mode: str = "all",
                 has_class_token: bool = True):
        if pool_mode not in POOL_MODES:
            raise ValueError(f"pool_mode must be one of {POOL_MODES}, got {pool_mode!r}")
        self.module = module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self.preprocess = preprocess
        self.pool_mode = pool_mode
        self.has_class_token = has_class_token

    def _tokens(self, batch: torch.Tensor) -> torch.Tensor:
        out = self.module(batch)
        if hasattr(out, "last_hidden_state"):  # transformers-style output
            return out.last_hidden_state
        return out

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> torch.Tensor:
        tokens = self._tokens(batch)
        if tokens.ndim != 3:
            raise ValueError(f"expected (batch, tokens, dim) output, got {tuple(tokens.shape)}")
        if self.pool_mode == "patch" and self.has_class_token:
            tokens = tokens[:, 1:, :]
        return tokens.mean(dim=1)

    def describe(self) -> dict:
        return {"kind": "token-pooling", "pool_mode": self.pool_mode,
                "preprocess": self.preprocess.describe()}


class ProjectedEncoder:
    """CLIP-style encoder whose module already yields one vector per image."""

    def __init__(self, module, preprocess: Preprocess,
                 output_attr: str | None = "image_embeds"):
        self.module = module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self.preprocess = preprocess
        self.output_attr = output_attr

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> torch.Tensor:
        out = self.module(batch)
        if self.output_attr and hasattr(out, self.output_attr):
            out = getattr(out, self.output_attr)
        if out.ndim != 2:
            raise ValueError(f"expected (batch, dim) output, got {tuple(out.shape)}")
        return out

    def describe(self) -> dict:
        return {"kind": "projected", "preprocess": self.preprocess.describe()}


def load_pretrained_encoder(spec, pool_mode: str = "all"):
    """Instantiate a registry entry from its source library with real weights.

    Needs the optional dependency for the entry's source (timm or
    open_clip_torch) and network access to fetch the checkpoint; the offline
    test suite builds its own stub encoders instead.
    """
    if spec.source == "timm":
        try:
            import timm
        except ImportError as exc:
            raise RuntimeError(
                f"loading {spec.name} needs the 'timm' extra: pip install vitextract[timm]"
            ) from exc
        module = timm.create_model(spec.source_id, pretrained=True, num_classes=0)
        cfg = timm.data.resolve_model_data_config(module)
        pre = Preprocess(cfg["input_size"][-1], tuple(cfg["mean"]), tuple(cfg["std"]))
        # forward_features yields tokens for ViTs; wrap to keep one surface
        class _Tokens(torch.nn.Module):
            def __init__(self, inner):
                super().__init__()
                self.inner = inner

            def forward(self, x):
                return self.inner.forward_features(x)

        return TokenPoolingEncoder(_Tokens(module), pre, pool_mode=pool_mode)
    if spec.source == "open_clip":
        try:
            import open_clip
        except ImportError as exc:
            raise RuntimeError(
                f"loading {spec.name} needs the 'openclip' extra: "
                "pip install vitextract[openclip]"
            ) from exc
        arch, _, tag = spec.source_id.partition("/")
        model, _, _ = open_clip.create_model_and_transforms(arch, pretrained=tag)

        class _Visual(torch.nn.Module):
            def __init__(self, inner):
                super().__init__()
                self.inner = inner

            def forward(self, x):
                return self.inner.encode_image(x)

        return ProjectedEncoder(_Visual(model), CLIP_PREPROCESS, output_attr=None)
    raise ValueError(f"unknown encoder source {spec.source!r}")
