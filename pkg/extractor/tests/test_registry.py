import json

import pytest

from vitextract.registry import get_model_spec, load_registry

# Representation dims and parameter counts per registry entry.
EXPECTED = {
    "vit-t": (192, 5.7),
    "vit-s": (384, 22.1),
    "vit-b": (768, 86.6),
    "vit-l": (1024, 304.3),
    "vit-b-clip": (512, 86.6),
    "vit-l-clip": (768, 304.3),
}


def test_registry_matches_expected_table():
    registry = load_registry()
    assert set(registry) == set(EXPECTED)
    for name, (dim, params) in EXPECTED.items():
        spec = registry[name]
        assert spec.repr_dim == dim
        assert spec.param_count_m == params


def test_clip_entries_are_post_projection():
    registry = load_registry()
    assert registry["vit-b-clip"].is_clip
    assert registry["vit-b-clip"].repr_dim != registry["vit-b"].repr_dim
    assert registry["vit-l-clip"].repr_dim != registry["vit-l"].repr_dim
    assert not registry["vit-t"].is_clip


def test_unknown_model_name():
    with pytest.raises(KeyError):
        get_model_spec("vit-xxl")


def test_alternate_registry_file(tmp_path):
    doc = {
        "schema_version": 1,
        "models": [
            {
                "name": "toy", "source": "timm", "source_id": "toy_model",
                "repr_dim": 16, "param_count_m": 0.1, "training_method": "standard",
                "pretrain_dataset": "none", "finetune_dataset": None,
            }
        ],
    }
    path = tmp_path / "models.json"
    path.write_text(json.dumps(doc))
    assert get_model_spec("toy", path).repr_dim == 16
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_registry(path)
