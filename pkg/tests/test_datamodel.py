import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rasc.datamodel import (
    GridConfig, Image8, NormalizedGrid, PointCloud, RangeGrid, decode_grid, decode_pointcloud, decode_ppm,
    encode_grid, encode_pointcloud, encode_ppm, load_artifact, save_artifact,
)
from rasc.errors import FormatError


def test_image_validation():
    with pytest.raises(ValueError):
        Image8(np.zeros((4, 4, 3), np.float32))
    with pytest.raises(ValueError):
        Image8(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        Image8(np.zeros((0, 4, 3), np.uint8))
    img = Image8(np.zeros((2, 5, 3), np.uint8))
    assert (img.width, img.height, img.channels) == (5, 2, 3)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_ppm_roundtrip(data):
    img = Image8(data)
    assert decode_ppm(encode_ppm(img)) == img


def test_ppm_header_comments_and_errors():
    body = bytes(range(12))
    img = decode_ppm(b"P6 # made by hand\n2 2\n# more\n255\n" + body)
    assert img.data.tobytes() == body
    with pytest.raises(FormatError):
        decode_ppm(b"P5\n2 2\n255\n" + body)
    with pytest.raises(FormatError):
        decode_ppm(b"P6\n2 2\n65535\n" + body)
    with pytest.raises(FormatError):
        decode_ppm(b"P6\n2 2\n255\n" + body[:-1])
    with pytest.raises(FormatError):
        decode_ppm(b"P6\n2")


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(0, 50), st.just(4)),
              elements=st.floats(-1e4, 1e4, width=32)))
def test_pointcloud_roundtrip_bit_exact(pts):
    cloud = PointCloud(pts)
    back = decode_pointcloud(encode_pointcloud(cloud))
    assert back == cloud
    assert len(encode_pointcloud(cloud)) == 16 * len(cloud)


def test_pointcloud_rejects_bad_input():
    with pytest.raises(FormatError):
        decode_pointcloud(b"\0" * 15)
    with pytest.raises(FormatError):
        decode_pointcloud(np.array([np.nan, 0, 0, 0], "<f4").tobytes())
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)))


def test_grid_roundtrip_keeps_config(rng):
    cfg = GridConfig(5, 7, 3.0, -20.0, 80.0)
    occ = rng.random((5, 7)) < 0.4
    coords = rng.normal(size=(5, 7, 3)).astype(np.float32)
    grid = RangeGrid(cfg, occ, coords)
    assert not grid.coords[~occ].any()
    back = decode_grid(encode_grid(grid))
    assert back == grid
    assert back.config == cfg


def test_grid_rejects_corruption():
    cfg = GridConfig(4, 4)
    grid = RangeGrid(cfg, np.ones((4, 4), bool), np.ones((4, 4, 3), np.float32))
    blob = encode_grid(grid)
    with pytest.raises(FormatError):
        decode_grid(blob[:-30])
    with pytest.raises(FormatError):
        decode_grid(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        decode_grid(blob[:10])


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridConfig(0, 10)
    with pytest.raises(ValueError):
        GridConfig(4, 4, elev_max=-30.0, elev_min=-10.0)
    with pytest.raises(ValueError):
        GridConfig(4, 4, r_max=0)


def test_normalized_grid_range_check():
    cfg = GridConfig(2, 2)
    occ = np.ones((2, 2), bool)
    with pytest.raises(ValueError):
        NormalizedGrid(cfg, np.full((2, 2, 3), 1.5), occ)
    NormalizedGrid(cfg, np.full((2, 2, 3), 0.5), occ)


def test_artifacts_sniffed_on_load(tmp_path, rng):
    img = Image8(rng.integers(0, 256, (3, 4, 3), dtype=np.uint8))
    cloud = PointCloud.from_xyz(rng.normal(size=(10, 3)))
    grid = RangeGrid(GridConfig(2, 3), np.eye(2, 3, dtype=bool), np.ones((2, 3, 3), np.float32))
    for name, obj in (("a.ppm", img), ("b.bin", cloud), ("c.grid", grid)):
        save_artifact(obj, tmp_path / name)
        assert load_artifact(tmp_path / name) == obj
