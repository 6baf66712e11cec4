import json
import struct

import numpy as np
import pytest

from mvinpaint.camera import Camera, DepthMap, View
from mvinpaint.io import (
    load_manifest,
    read_indexed_png,
    read_mask,
    read_obj,
    read_pfm,
    read_png,
    save_manifest,
    write_indexed_png,
    write_obj,
    write_pfm,
    write_png,
)


def test_pfm_layout_bottom_up_little_endian(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    write_pfm(tmp_path / "a.pfm", a)
    raw = (tmp_path / "a.pfm").read_bytes()
    *header, rest = raw.split(b"\n", 3)
    assert header == [b"Pf", b"3 2", b"-1.0"]
    vals = struct.unpack("<6f", rest)
    # the first stored row is the bottom image row
    assert vals == (3.0, 4.0, 5.0, 0.0, 1.0, 2.0)


@pytest.mark.parametrize("shape", [(5, 7), (5, 7, 3)])
def test_pfm_round_trip(tmp_path, rng, shape):
    a = rng.normal(size=shape).astype(np.float32)
    write_pfm(tmp_path / "a.pfm", a)
    np.testing.assert_array_equal(read_pfm(tmp_path / "a.pfm"), a)


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (4, 5, 3)) / 255.0
    write_png(tmp_path / "i.png", img)
    np.testing.assert_allclose(read_png(tmp_path / "i.png"), img, atol=1e-12)
    m = rng.uniform(size=(4, 5)) < 0.5
    write_png(tmp_path / "m.png", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), m)


def test_indexed_png(tmp_path):
    idx = np.array([[0, 1, -1], [3, 2, 0]])
    write_indexed_png(tmp_path / "s.png", idx, 4)
    np.testing.assert_array_equal(read_indexed_png(tmp_path / "s.png"), idx)


def test_obj_round_trip(tmp_path, rng):
    V = rng.normal(size=(6, 3))
    F = np.array([[0, 1, 2], [3, 4, 5]])
    C = rng.uniform(size=(6, 3))
    write_obj(tmp_path / "m.obj", V, F, C)
    V2, F2, C2 = read_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(V2, V, rtol=1e-8)
    np.testing.assert_array_equal(F2, F)
    np.testing.assert_allclose(C2, C, atol=1e-6)
    lines = (tmp_path / "m.obj").read_text().splitlines()
    assert lines[0].startswith("v ") and len(lines[0].split()) == 7
    assert lines[-1] == "f 4 5 6"


def test_manifest_round_trip(tmp_path, rng):
    cam = Camera.from_params(30.0, 4.0, 3.0)
    d = DepthMap(rng.uniform(1, 2, (6, 8)).astype(np.float32).astype(float))
    img = rng.integers(0, 256, (6, 8, 3)) / 255.0
    views = [View(img, rng.uniform(size=(6, 8)) < 0.3, False, cam, d),
             View(img, np.zeros((6, 8), bool), True)]
    save_manifest(tmp_path / "m" / "manifest.json", views)
    back = load_manifest(tmp_path / "m" / "manifest.json")
    assert len(back) == 2
    np.testing.assert_allclose(back[0].image, img)
    np.testing.assert_array_equal(back[0].mask, views[0].mask)
    assert back[0].camera == cam
    np.testing.assert_array_equal(back[0].depth.values, d.values)
    assert back[1].inpainted and back[1].camera is None and back[1].depth is None


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        load_manifest(tmp_path / "none.json")
    (tmp_path / "m.json").write_text(json.dumps([{"image": "missing.png"}]))
    with pytest.raises(ValueError, match="view 0"):
        load_manifest(tmp_path / "m.json")
    (tmp_path / "e.json").write_text("[]")
    with pytest.raises(ValueError):
        load_manifest(tmp_path / "e.json")
