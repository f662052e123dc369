import json

import pytest

from conftest import build_stub_encoder
from vitextract.extract import extract, verify_pairing
from vitextract.registry import get_model_spec


@pytest.fixture(scope="module")
def two_extractions(tmp_path_factory, image_tree):
    base = tmp_path_factory.mktemp("pairing")
    out_x, out_y = base / "x", base / "y"
    extract(get_model_spec("vit-t"), build_stub_encoder(get_model_spec("vit-t"), seed=1),
            image_tree, out_x)
    extract(get_model_spec("vit-s"), build_stub_encoder(get_model_spec("vit-s"), seed=2),
            image_tree, out_y)
    return out_x, out_y


def test_same_image_list_two_models_pass(two_extractions):
    report = verify_pairing(*two_extractions)
    assert report.ok
    assert report.count_x == report.count_y == 6
    assert "pairing ok" in report.describe()


def test_missing_image_fails_and_names_the_id(two_extractions, tmp_path):
    out_x, out_y = two_extractions
    broken = tmp_path / "y_missing"
    broken.mkdir()
    ids = json.loads((out_y / "ids.json").read_text())
    removed = ids.pop(2)
    (broken / "ids.json").write_text(json.dumps(ids))
    report = verify_pairing(out_x, broken)
    assert not report.ok
    assert removed in report.first_mismatch
    assert "FAILED" in report.describe()


def test_shuffled_order_fails(two_extractions, tmp_path):
    out_x, out_y = two_extractions
    shuffled = tmp_path / "y_shuffled"
    shuffled.mkdir()
    ids = json.loads((out_y / "ids.json").read_text())
    ids[0], ids[1] = ids[1], ids[0]
    (shuffled / "ids.json").write_text(json.dumps(ids))
    report = verify_pairing(out_x, shuffled)
    assert not report.ok  # order is part of the contract
