"""Codec payload container.

Layout (little-endian)::

    u8  codec id          u8  quality / lambda tag
    u16 width             u16 height
    u8  channels          u8  flags (bit0/bit1: width/height padded, bit2: grid samples)
    u8  n_tables, then n_tables serialized FrequencyModels
    u32 side_len, side bytes (grid occupancy + config, codec extras)
    u32 bit_length, ceil(bit_length / 8) range-coded bytes

``width``/``height`` are the source dimensions before padding.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from ..datamodel import GridConfig
from ..entropy import Bitstream, FrequencyModel, decode_multi, encode_multi
from ..errors import CodecError, EntropyCodingError

FLAG_PAD_W = 0x1
FLAG_PAD_H = 0x2
FLAG_GRID = 0x4

MAX_PIXELS = 1 << 24

_HEAD = struct.Struct("<BBHHBB")
_U32 = struct.Struct("<I")
_GRID_CFG = struct.Struct("<ddd")


class CodecId(enum.IntEnum):
    BLOCK_DCT = 1
    LEARNED_AE = 2


@dataclass(frozen=True)
class EncodedPayload:
    codec: CodecId
    tag: int
    width: int
    height: int
    channels: int
    flags: int
    models: tuple[FrequencyModel, ...]
    stream: Bitstream
    side: bytes = field(default=b"")

    @property
    def is_grid(self) -> bool:
        return bool(self.flags & FLAG_GRID)

    def to_bytes(self) -> bytes:
        parts = [
            _HEAD.pack(int(self.codec), self.tag, self.width, self.height, self.channels, self.flags),
            bytes([len(self.models)]),
        ]
        parts += [m.to_bytes() for m in self.models]
        parts += [_U32.pack(len(self.side)), self.side, _U32.pack(self.stream.bit_length), self.stream.data]
        return b"".join(parts)

    @property
    def byte_length(self) -> int:
        return (
            _HEAD.size + 1 + sum(2 + 4 * m.alphabet_size for m in self.models)
            + 4 + len(self.side) + 4 + len(self.stream.data)
        )

    @property
    def bpp(self) -> float:
        return 8.0 * self.byte_length / (self.width * self.height)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EncodedPayload":
        buf = bytes(buf)
        if len(buf) < _HEAD.size + 1:
            raise CodecError("payload shorter than its header")
        codec, tag, w, h, ch, flags = _HEAD.unpack_from(buf)
        try:
            codec = CodecId(codec)
        except ValueError:
            raise CodecError(f"unknown codec id {codec}") from None
        if w < 1 or h < 1 or w * h > MAX_PIXELS:
            raise CodecError(f"implausible payload dimensions {w}x{h}")
        if ch != 3:
            raise CodecError(f"unsupported channel count {ch}")
        pos = _HEAD.size
        n = buf[pos]
        pos += 1
        models = []
        try:
            for _ in range(n):
                m, pos = FrequencyModel.from_buffer(buf, pos)
                models.append(m)
        except EntropyCodingError as exc:
            raise CodecError(f"bad entropy model table: {exc}") from None
        if len(buf) < pos + 4:
            raise CodecError("truncated payload side-info length")
        (side_len,) = _U32.unpack_from(buf, pos)
        pos += 4
        if len(buf) < pos + side_len + 4:
            raise CodecError("truncated payload side info")
        side = buf[pos : pos + side_len]
        pos += side_len
        (bit_length,) = _U32.unpack_from(buf, pos)
        pos += 4
        nbytes = (bit_length + 7) // 8
        if len(buf) != pos + nbytes:
            raise CodecError(f"payload body is {len(buf) - pos} bytes, header implies {nbytes}")
        return cls(codec, tag, w, h, ch, flags, tuple(models), Bitstream(buf[pos:], bit_length), side)


# --------------------------------------------------------------------------
# grid side info: config + losslessly coded occupancy


def _length_code(lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split positive integers into (bit-length category, mantissa below the top bit)."""
    cat = np.zeros(lengths.shape, np.int64)
    v = lengths.copy()
    while (v > 0).any():
        cat += v > 0
        v >>= 1
    return cat, lengths - (np.int64(1) << np.maximum(cat - 1, 0))


def _length_models(cats: np.ndarray, values: np.ndarray):
    models, extra = [], []
    for val in (0, 1):
        c = cats[values == val]
        alpha = max(int(c.max()) + 1 if c.size else 1, 2)
        models.append(FrequencyModel.from_histogram(np.bincount(c, minlength=alpha)))
        extra.append(np.maximum(np.arange(alpha) - 1, 0))
    return models, extra


def encode_grid_side(config: GridConfig, occupancy: np.ndarray) -> bytes:
    """Config trailer plus run-length + range-coded occupancy (row-major)."""
    flat = np.asarray(occupancy, bool).ravel()
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    lengths = np.diff(bounds).astype(np.int64)
    values = flat[bounds[:-1]].astype(np.int64)
    cats, mant = _length_code(lengths)
    models, extra = _length_models(cats, values)
    stream = encode_multi(cats, values, models, extra_bits=extra, raw=mant)
    parts = [_GRID_CFG.pack(config.elev_max, config.elev_min, config.r_max),
             struct.pack("<BI", int(flat[0]), lengths.size)]
    parts += [m.to_bytes() for m in models]
    parts += [struct.pack("<II", stream.bit_length, len(stream.data)), stream.data]
    return b"".join(parts)


def decode_grid_side(side: bytes, h: int, w: int) -> tuple[GridConfig, np.ndarray, int]:
    """Returns (config, occupancy, bytes consumed)."""
    try:
        elev_max, elev_min, r_max = _GRID_CFG.unpack_from(side)
        config = GridConfig(h, w, elev_max, elev_min, r_max)
        pos = _GRID_CFG.size
        first, nruns = struct.unpack_from("<BI", side, pos)
        pos += 5
        if first > 1 or not 1 <= nruns <= h * w:
            raise CodecError("bad occupancy run header")
        models = []
        for _ in range(2):
            m, pos = FrequencyModel.from_buffer(side, pos)
            models.append(m)
        extra = [np.maximum(np.arange(m.alphabet_size) - 1, 0) for m in models]
        if max(m.alphabet_size for m in models) > 33:
            raise CodecError("occupancy run model too large")
        bit_length, nbytes = struct.unpack_from("<II", side, pos)
        pos += 8
        if len(side) < pos + nbytes:
            raise CodecError("truncated occupancy stream")
        stream = Bitstream(side[pos : pos + nbytes], bit_length)
        pos += nbytes
        values = (np.arange(nruns) + first) % 2
        cats, mant = decode_multi(stream, values, models, extra_bits=extra)
        lengths = np.where(cats > 0, (np.int64(1) << np.maximum(cats - 1, 0)) + mant, 0)
        if (lengths < 1).any() or lengths.sum() != h * w:
            raise CodecError("occupancy runs do not cover the grid")
        occ = np.repeat(values.astype(bool), lengths).reshape(h, w)
    except (struct.error, ValueError) as exc:
        raise CodecError(f"bad grid side info: {exc}") from None
    return config, occ, pos
