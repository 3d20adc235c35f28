import json

import numpy as np
import pytest
import torch

from saltlab.boxes import BBox
from saltlab.composer import (BackgroundAsset, ObjectAsset, builtin_background, builtin_object, compose_reference,
                              load_background_asset, load_object_asset, salt_init)
from saltlab.errors import AssetError, ContractError, DegenerateBoxError
from saltlab.io import write_ppm

SQUARE = ObjectAsset("block", np.ones((5, 5), bool), (0.9, 0.15, 0.1))


def test_full_canvas_square():
    img = compose_reference(builtin_background("gray-plain"), SQUARE, [BBox(0, 0, 1, 1)])
    assert np.all(img == np.array(SQUARE.color))


def test_empty_boxes():
    with pytest.raises(ContractError):
        compose_reference(builtin_background("gray-plain"), SQUARE, [])


def test_quarter_box_region():
    bg = builtin_background("green-plain")
    img = compose_reference(bg, SQUARE, [BBox(0.25, 0.25, 0.75, 0.75)])
    painted = np.any(img != bg.image, axis=-1)
    rows, cols = np.nonzero(painted)
    assert (rows.min(), rows.max() + 1, cols.min(), cols.max() + 1) == (8, 24, 8, 24)
    assert painted.sum() == 256


def test_degenerate_box():
    with pytest.raises(DegenerateBoxError):
        compose_reference(builtin_background("gray-plain"), SQUARE, [BBox(0.5, 0.5, 0.53, 0.9)])


def test_later_boxes_overdraw():
    bg = builtin_background("gray-plain")
    blue = ObjectAsset("b", np.ones((2, 2), bool), (0.1, 0.2, 0.9))
    img = compose_reference(bg, blue, [BBox(0, 0, 0.5, 0.5), BBox(0.25, 0.25, 0.75, 0.75)])
    assert np.all(img[8:24, 8:24] == blue.color)


def test_builtin_objects():
    for name in ("cat", "dog", "bread"):
        a = builtin_object(name)
        assert a.mask.any() and not a.mask.all()
    with pytest.raises(AssetError, match="zebra"):
        builtin_object("zebra")


def test_asset_loading(tmp_path):
    mask = np.zeros((8, 8, 3))
    mask[2:6, 1:7] = 1.0
    write_ppm(tmp_path / "thing.ppm", mask)
    (tmp_path / "thing.json").write_text(json.dumps({"class": "thing", "color": [0.2, 0.3, 0.4]}))
    obj = load_object_asset(tmp_path / "thing.ppm")
    assert obj.name == "thing" and obj.mask.sum() == 24
    write_ppm(tmp_path / "bg.ppm", np.full((32, 32, 3), 0.5))
    bg = load_background_asset(tmp_path / "bg.ppm")
    assert bg.image.shape == (32, 32, 3)
    with pytest.raises(AssetError):
        load_object_asset(tmp_path / "missing.ppm")
    with pytest.raises(AssetError):
        load_background_asset(tmp_path / "missing.ppm")


def test_asset_validation():
    with pytest.raises(AssetError):
        ObjectAsset("x", np.zeros((3, 3), bool), (0.1, 0.1, 0.1))
    with pytest.raises(AssetError):
        BackgroundAsset("x", np.full((4, 4, 3), 2.0))


def test_salt_init_determinism_and_box_sensitivity(tiny_model, tiny_sched):
    bg, obj = builtin_background("green-plain"), builtin_object("cat")
    a = compose_reference(bg, obj, [BBox(0.1, 0.1, 0.5, 0.5)])
    b = compose_reference(bg, obj, [BBox(0.5, 0.4, 0.9, 0.9)])
    za = salt_init(a, tiny_model, tiny_sched, 10)
    assert torch.equal(za, salt_init(a, tiny_model, tiny_sched, 10))
    zb = salt_init(b, tiny_model, tiny_sched, 10)
    assert float((za - zb).norm()) > 1.0
    both = salt_init(np.stack([a, b]), tiny_model, tiny_sched, 10)
    torch.testing.assert_close(both[0:1], za)
    with pytest.raises(ContractError):
        salt_init(a, tiny_model, tiny_sched, 0)
