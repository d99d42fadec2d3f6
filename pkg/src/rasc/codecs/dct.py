"""Block-transform baseline codec.

Per channel: 8x8 orthonormal DCT-II, uniform quantisation with the IJG
quality-scaled tables (images go through a YCbCr transform first, chroma
gets the coarser table), zig-zag scan. Each coefficient is sent as a
magnitude category (range-coded, one model per channel and frequency band,
DC coded as a difference to the previous block) followed by its mantissa as
raw bits.

Images are coded on their 8-bit scale. Normalized grids are coded on a
finer scale (``GRID_PEAK``), since one 8-bit step of a 240 m wide range
already costs about a meter.
"""

from __future__ import annotations

import numpy as np

from ..datamodel import Image8, NormalizedGrid
from ..entropy import FrequencyModel, decode_multi, encode_multi
from ..errors import CodecError, EntropyCodingError
from .payload import (
    FLAG_GRID,
    FLAG_PAD_H,
    FLAG_PAD_W,
    CodecId,
    EncodedPayload,
    decode_grid_side,
    encode_grid_side,
)
from .quant import quantize

GRID_PEAK = 4095.0
MAX_CATEGORY = 20

# IJG luminance table (ITU-T T.81 Annex K)
_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)

# full-range BT.601 (JFIF) colour transform, applied to centred samples
_RGB2YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCC2RGB = np.linalg.inv(_RGB2YCC)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c


def _zigzag(n: int = 8) -> np.ndarray:
    idx = sorted(((i, j) for i in range(n) for j in range(n)),
                 key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    return np.array([i * n + j for i, j in idx])


DCT8 = _dct_matrix()
ZIGZAG = _zigzag()
# zig-zag band boundaries: DC | 1-9 | 10-35 | 36-63
_BAND = np.zeros(64, np.int64)
_BAND[1:10] = 1
_BAND[10:36] = 2
_BAND[36:] = 3
N_BANDS = 4


def quant_steps(quality: int, chroma: bool = False) -> np.ndarray:
    """8x8 step matrix for ``quality`` in [1, 100]; all ones at 100."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    base = _CHROMA if chroma else _LUMA
    return np.maximum(1.0, np.floor((base * scale + 50) / 100))


def _channel_steps(quality: int, channels: int, grid: bool) -> list[np.ndarray]:
    # images are coded as Y/Cb/Cr; grid coordinates all use the fine table
    if grid:
        return [quant_steps(quality)] * channels
    return [quant_steps(quality, chroma=c > 0) for c in range(channels)]


def _blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).reshape(-1, 8, 8)


def _unblocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).swapaxes(1, 2).reshape(h, w)


def _categories(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """JPEG-style (category, mantissa) split of signed integers."""
    # frexp's exponent is exactly bit_length(|v|) for integers below 2**53
    cat = np.frexp(np.abs(v).astype(np.float64))[1].astype(np.int64)
    mant = np.where(v >= 0, v, v + (np.int64(1) << cat) - 1)
    return cat, mant


def _from_categories(cat: np.ndarray, mant: np.ndarray) -> np.ndarray:
    neg = (mant >> np.maximum(cat - 1, 0)) == 0
    return np.where(neg & (cat > 0), mant - (np.int64(1) << cat) + 1, mant)


def _samples(obj) -> tuple[np.ndarray, int]:
    if isinstance(obj, Image8):
        return (obj.data.astype(np.float64) - 128.0) @ _RGB2YCC.T, 0
    if isinstance(obj, NormalizedGrid):
        return obj.values * GRID_PEAK - GRID_PEAK / 2, FLAG_GRID
    raise TypeError(f"cannot encode {type(obj).__name__}")


def pad_to_multiple(x: np.ndarray, m: int = 8) -> tuple[np.ndarray, int]:
    """Mirror-pad (edge included) the first two axes up to a multiple of ``m``."""
    h, w = x.shape[:2]
    ph, pw = (-h) % m, (-w) % m
    flags = (FLAG_PAD_W if pw else 0) | (FLAG_PAD_H if ph else 0)
    if ph or pw:
        x = np.pad(x, ((0, ph), (0, pw)) + ((0, 0),) * (x.ndim - 2), mode="symmetric")
    return x, flags


def _symbol_layout(nblocks: int, channels: int) -> np.ndarray:
    """Model id of every coded coefficient, in channel / block / zig-zag order."""
    per_block = _BAND[None, :] + N_BANDS * np.arange(channels)[:, None]
    return np.repeat(per_block[:, None, :], nblocks, axis=1).ravel()


def dct_encode(obj: Image8 | NormalizedGrid, quality: int = 75) -> EncodedPayload:
    if not 1 <= quality <= 100:
        raise CodecError(f"quality must be in [1, 100], got {quality}")
    x, kind = _samples(obj)
    h, w, ch = x.shape
    if h == 0 or w == 0:
        raise CodecError("cannot encode an empty image")
    x, pad = pad_to_multiple(x)
    H, W = x.shape[:2]
    steps = _channel_steps(quality, ch, bool(kind))
    coefs = []
    for c in range(ch):
        blk = _blocks(x[:, :, c])
        d = DCT8 @ blk @ DCT8.T
        q = quantize(d / steps[c], 1.0).reshape(-1, 64)[:, ZIGZAG]
        q[1:, 0] -= q[:-1, 0].copy()
        coefs.append(q)
    coefs = np.stack(coefs)  # (ch, nblocks, 64)
    nblocks = coefs.shape[1]
    cat, mant = _categories(coefs.ravel())
    if cat.max(initial=0) > MAX_CATEGORY:
        raise CodecError("coefficient magnitude out of range")
    model_ids = _symbol_layout(nblocks, ch)
    width = MAX_CATEGORY + 1
    hist = np.bincount(model_ids * width + cat, minlength=ch * N_BANDS * width).reshape(-1, width)
    models, extra = [], []
    for row in hist:
        alpha = int(np.flatnonzero(row).max(initial=0)) + 1
        models.append(FrequencyModel.from_histogram(row[:alpha]))
        extra.append(np.arange(alpha))
    stream = encode_multi(cat, model_ids, models, extra_bits=extra, raw=mant)
    side = encode_grid_side(obj.config, obj.occupancy) if kind else b""
    return EncodedPayload(CodecId.BLOCK_DCT, quality, w, h, ch, kind | pad, tuple(models), stream, side)


def dct_decode(payload: EncodedPayload) -> Image8 | NormalizedGrid:
    if payload.codec != CodecId.BLOCK_DCT:
        raise CodecError(f"expected a BLOCK_DCT payload, got {payload.codec.name}")
    if not 1 <= payload.tag <= 100:
        raise CodecError(f"invalid quality {payload.tag}")
    w, h, ch = payload.width, payload.height, payload.channels
    H, W = h + (-h) % 8, w + (-w) % 8
    nblocks = (H // 8) * (W // 8)
    if len(payload.models) != ch * N_BANDS:
        raise CodecError(f"expected {ch * N_BANDS} entropy models, got {len(payload.models)}")
    if any(m.alphabet_size > MAX_CATEGORY + 1 for m in payload.models):
        raise CodecError("coefficient category table too large")
    extra = [np.arange(m.alphabet_size) for m in payload.models]
    try:
        cat, mant = decode_multi(payload.stream, _symbol_layout(nblocks, ch), payload.models, extra_bits=extra)
    except EntropyCodingError as exc:
        raise CodecError(f"corrupt coefficient stream: {exc}") from None
    coefs = _from_categories(cat, mant).reshape(ch, nblocks, 64)
    steps = _channel_steps(payload.tag, ch, payload.is_grid)
    inv = np.argsort(ZIGZAG)
    planes = np.empty((H, W, ch))
    for c in range(ch):
        q = coefs[c].copy()
        q[:, 0] = np.cumsum(q[:, 0])
        d = q[:, inv].reshape(-1, 8, 8) * steps[c]
        planes[:, :, c] = _unblocks(DCT8.T @ d @ DCT8, H, W)
    planes = planes[:h, :w]
    if payload.is_grid:
        config, occ, _ = decode_grid_side(payload.side, h, w)
        vals = np.clip((planes + GRID_PEAK / 2) / GRID_PEAK, 0.0, 1.0)
        vals[~occ] = 0.0
        return NormalizedGrid(config, vals, occ)
    pix = np.clip(np.floor(planes @ _YCC2RGB.T + 128.0 + 0.5), 0, 255).astype(np.uint8)
    return Image8(pix)
