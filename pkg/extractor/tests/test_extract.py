import numpy as np
import pytest

from conftest import build_stub_encoder, stub_token_encoder, write_image_tree
from vitextract import formats
from vitextract.extract import DimensionMismatchError, extract, list_image_tree
from vitextract.registry import get_model_spec


@pytest.fixture(scope="module")
def tiny_spec():
    return get_model_spec("vit-t")


@pytest.fixture(scope="module")
def tiny_encoder(tiny_spec):
    return build_stub_encoder(tiny_spec, seed=1)


def read_back(out_dir):
    header = formats.read_embeddings_header(out_dir / "embeddings.emb1")
    raw = (out_dir / "embeddings.emb1").read_bytes()
    dtype = "<f4" if header["dtype_code"] == 1 else "<f8"
    flat = np.frombuffer(raw[25:], dtype=dtype)
    return header, flat.reshape(header["count"], header["dim"]).T


def test_image_tree_listing_sorted_and_labeled(image_tree):
    paths, labels, class_names = list_image_tree(image_tree)
    assert class_names == ["aves", "canis"]
    assert labels == [0, 0, 0, 1, 1, 1]
    rel = [str(p.relative_to(image_tree)) for p in paths]
    assert rel == sorted(rel)


def test_extract_unit_norm_ids_and_labels(tmp_path, image_tree, tiny_spec, tiny_encoder):
    out = tmp_path / "out"
    summary = extract(tiny_spec, tiny_encoder, image_tree, out)
    assert summary.dim == 192
    assert summary.count == 6
    assert summary.num_classes == 2
    assert summary.skipped == ()

    header, matrix = read_back(out)
    assert header["dim"] == 192 and header["count"] == 6
    norms = np.linalg.norm(matrix, axis=0)
    assert np.abs(norms - 1.0).max() < 1e-5

    ids = formats.read_sample_ids(out / "ids.json")
    assert ids == sorted(ids)
    assert ids[0].startswith("aves/")
    assert (out / "extraction.json").exists()


def test_extract_is_deterministic(tmp_path, image_tree, tiny_spec, tiny_encoder):
    a, b = tmp_path / "a", tmp_path / "b"
    extract(tiny_spec, tiny_encoder, image_tree, a)
    extract(tiny_spec, tiny_encoder, image_tree, b)
    assert (a / "embeddings.emb1").read_bytes() == (b / "embeddings.emb1").read_bytes()
    assert (a / "labels.lbl1").read_bytes() == (b / "labels.lbl1").read_bytes()


def test_undecodable_image_skipped_and_logged(tmp_path, tiny_spec, tiny_encoder, caplog):
    tree = write_image_tree(tmp_path / "imgs", per_class=2, seed=3)
    (tree / "aves" / "broken.png").write_bytes(b"this is not a png")
    summary = extract(tiny_spec, tiny_encoder, tree, tmp_path / "out")
    assert summary.count == 4
    assert summary.skipped == ("aves/broken.png",)
    assert "skipping undecodable image" in caplog.text
    ids = formats.read_sample_ids(tmp_path / "out" / "ids.json")
    assert "aves/broken.png" not in ids


def test_dim_mismatch_is_an_error(tmp_path, image_tree, tiny_spec):
    wrong = stub_token_encoder(64, seed=0)  # checkpoint width disagrees with registry
    with pytest.raises(DimensionMismatchError):
        extract(tiny_spec, wrong, image_tree, tmp_path / "out")


def test_pool_modes_change_vectors_but_keep_contract(tmp_path, image_tree, tiny_spec):
    all_tokens = build_stub_encoder(tiny_spec, pool_mode="all", seed=5)
    patch_only = build_stub_encoder(tiny_spec, pool_mode="patch", seed=5)
    extract(tiny_spec, all_tokens, image_tree, tmp_path / "all")
    extract(tiny_spec, patch_only, image_tree, tmp_path / "patch")
    _, m_all = read_back(tmp_path / "all")
    _, m_patch = read_back(tmp_path / "patch")
    assert not np.allclose(m_all, m_patch)
    assert np.abs(np.linalg.norm(m_patch, axis=0) - 1.0).max() < 1e-5


def test_same_image_twice_identical_vectors(tmp_path, tiny_spec, tiny_encoder):
    from PIL import Image

    rng = np.random.default_rng(7)
    pixels = rng.integers(0, 255, size=(40, 40, 3), dtype=np.uint8)
    tree = tmp_path / "twins"
    for cls in ("one", "two"):
        (tree / cls).mkdir(parents=True)
        Image.fromarray(pixels, "RGB").save(tree / cls / "same.png")
    extract(tiny_spec, tiny_encoder, tree, tmp_path / "out")
    _, matrix = read_back(tmp_path / "out")
    assert np.array_equal(matrix[:, 0], matrix[:, 1])


def test_f64_precision_option(tmp_path, image_tree, tiny_spec, tiny_encoder):
    extract(tiny_spec, tiny_encoder, image_tree, tmp_path / "out", precision="f64")
    header, matrix = read_back(tmp_path / "out")
    assert header["dtype_code"] == 2
    assert np.abs(np.linalg.norm(matrix, axis=0) - 1.0).max() < 1e-12
