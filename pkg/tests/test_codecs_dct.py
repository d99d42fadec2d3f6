import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dct_matrix
from rasc.codecs import CodecId, EncodedPayload, decode, encode
from rasc.codecs.dct import DCT8, GRID_PEAK, ZIGZAG, dct_decode, dct_encode, pad_to_multiple, quant_steps
from rasc.datamodel import GridConfig, Image8
from rasc.errors import CodecError
from rasc.lidar import denormalize_grid, mean_euclidean_distance, normalize_grid, pointcloud_to_grid
from rasc.metrics import psnr

IJG_LUMA_TOP_ROW = [16, 11, 10, 16, 24, 40, 51, 61]


def roundtrip(obj, quality):
    payload = dct_encode(obj, quality)
    back = EncodedPayload.from_bytes(payload.to_bytes())
    assert back.byte_length == len(payload.to_bytes())
    return payload, dct_decode(back)


def test_dct_basis_matches_definition():
    assert np.allclose(DCT8, dct_matrix(8), atol=1e-15)
    assert np.allclose(DCT8 @ DCT8.T, np.eye(8), atol=1e-14)


def test_zigzag_order():
    assert ZIGZAG[:10].tolist() == [0, 1, 8, 16, 9, 2, 3, 10, 17, 24]
    assert ZIGZAG[-1] == 63 and sorted(ZIGZAG.tolist()) == list(range(64))


def test_quality_scaling():
    assert quant_steps(50)[0].tolist() == IJG_LUMA_TOP_ROW
    assert (quant_steps(100) == 1).all()
    # scale 5000/10 = 500: 16 -> floor((16*500 + 50)/100) = 80
    assert quant_steps(10)[0, 0] == 80
    assert quant_steps(50, chroma=True)[0, 0] == 17
    for q in (0, 101):
        with pytest.raises(ValueError):
            quant_steps(q)


def test_padding_is_mirror_and_flagged():
    x = np.arange(10 * 13).reshape(10, 13, 1).astype(float)
    p, flags = pad_to_multiple(x)
    assert p.shape == (16, 16, 1)
    assert flags == 3
    assert p[10, 0, 0] == x[9, 0, 0] and p[0, 13, 0] == x[0, 12, 0]


@pytest.mark.parametrize("h,w", [(8, 8), (13, 21), (1, 1), (64, 40)])
def test_roundtrip_any_size(frame, h, w):
    img = Image8(frame.data[:h, :w])
    payload, out = roundtrip(img, 90)
    assert out.data.shape == img.data.shape
    assert payload.width == w and payload.height == h
    assert psnr(img, out) > 30


def test_quality_100_is_near_lossless(rng):
    img = Image8(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    _, out = roundtrip(img, 100)
    assert np.abs(out.data.astype(int) - img.data).max() <= 3
    assert psnr(img, out) > 45


def test_constant_image_is_tiny():
    img = Image8(np.full((256, 256, 3), 77, np.uint8))
    payload, out = roundtrip(img, 75)
    assert payload.byte_length < 300
    assert np.abs(out.data.astype(int) - 77).max() <= 1


def test_rate_grows_with_quality(frame):
    sizes = [dct_encode(frame, q).byte_length for q in (10, 30, 50, 75, 95)]
    assert sizes == sorted(sizes) and len(set(sizes)) == 5


def test_deterministic(frame):
    assert dct_encode(frame, 60).to_bytes() == dct_encode(frame, 60).to_bytes()


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24), st.just(3))), st.integers(1, 100))
def test_roundtrip_property(data, q):
    img = Image8(data)
    payload = dct_encode(img, q)
    out = decode(payload.to_bytes())
    assert out.data.shape == data.shape


def test_grid_roundtrip(scan):
    grid = pointcloud_to_grid(scan, GridConfig())
    ng = normalize_grid(grid)
    payload, out = roundtrip(ng, 90)
    assert payload.is_grid
    assert np.array_equal(out.occupancy, ng.occupancy)
    assert out.config == grid.config
    med, n = mean_euclidean_distance(grid, denormalize_grid(out))
    assert n == grid.n_occupied
    # one code step at the finest scale is 2 * r_max / GRID_PEAK
    assert med < 10 * 2 * grid.config.r_max / GRID_PEAK


def test_rejects_bad_payloads(frame):
    payload = dct_encode(frame, 50)
    blob = bytearray(payload.to_bytes())
    with pytest.raises(CodecError):
        EncodedPayload.from_bytes(bytes(blob[:-1]))
    bad = bytearray(blob)
    bad[0] = 9
    with pytest.raises(CodecError):
        EncodedPayload.from_bytes(bytes(bad))
    bad = bytearray(blob)
    bad[1] = 0
    with pytest.raises(CodecError):
        dct_decode(EncodedPayload.from_bytes(bytes(bad)))
    with pytest.raises(CodecError):
        dct_encode(frame, 0)
    with pytest.raises(CodecError):
        encode(frame, CodecId.LEARNED_AE)


def test_bit_flips_fail_cleanly(frame, rng):
    blob = dct_encode(frame, 50).to_bytes()
    for _ in range(100):
        bad = bytearray(blob)
        bad[rng.integers(0, len(bad))] ^= 1 << int(rng.integers(0, 8))
        try:
            out = decode(bytes(bad))
        except CodecError:
            continue
        assert isinstance(out, Image8)
