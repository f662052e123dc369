import numpy as np
import pytest
import torch

from vitextract.encoders import Preprocess, ProjectedEncoder, TokenPoolingEncoder

STUB_IMAGE_SIZE = 32
STUB_PREPROCESS = Preprocess(STUB_IMAGE_SIZE, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


def stub_token_encoder(dim: int, pool_mode: str = "all", seed: int = 0) -> TokenPoolingEncoder:
    """Random-weight ViT at the requested width; offline stand-in for a checkpoint."""
    from transformers import ViTConfig, ViTModel

    torch.manual_seed(seed)
    config = ViTConfig(
        hidden_size=dim,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=2 * dim,
        image_size=STUB_IMAGE_SIZE,
        patch_size=16,
    )
    return TokenPoolingEncoder(ViTModel(config), STUB_PREPROCESS, pool_mode=pool_mode)


def stub_projected_encoder(dim: int, seed: int = 0) -> ProjectedEncoder:
    """Random-weight CLIP-style vision tower exporting post-projection vectors."""
    from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

    torch.manual_seed(seed)
    config = CLIPVisionConfig(
        hidden_size=256,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=512,
        image_size=STUB_IMAGE_SIZE,
        patch_size=16,
        projection_dim=dim,
    )
    return ProjectedEncoder(CLIPVisionModelWithProjection(config), STUB_PREPROCESS)


def build_stub_encoder(spec, pool_mode: str = "all", seed: int = 0):
    if spec.is_clip:
        return stub_projected_encoder(spec.repr_dim, seed=seed)
    return stub_token_encoder(spec.repr_dim, pool_mode=pool_mode, seed=seed)


def write_image_tree(root, classes=("aves", "canis"), per_class=3, size=40, seed=0):
    """Tiny class-per-subdirectory tree of random RGB PNGs."""
    from PIL import Image

    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for cls in classes:
        sub = root / cls
        sub.mkdir(exist_ok=True)
        for i in range(per_class):
            pixels = rng.integers(0, 255, size=(size, size, 3), dtype=np.uint8)
            Image.fromarray(pixels, "RGB").save(sub / f"img_{i:03d}.png")
    return root


@pytest.fixture(scope="session")
def image_tree(tmp_path_factory):
    return write_image_tree(tmp_path_factory.mktemp("images"))
