"""Static-model range coding and ideal code-length estimation.

A :class:`FrequencyModel` is a table of positive integer counts. Models are
shipped alongside the coded bytes (see :meth:`FrequencyModel.to_bytes`), so
the decoder needs no training state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _rangecoder as rc
from .errors import EntropyCodingError, TruncatedStreamError

MAX_TOTAL = rc.MAX_TOTAL
MAX_ALPHABET = 0xFFFF


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    """Per-symbol counts; symbol ``s`` has probability ``counts[s] / total``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if counts.size < 1 or counts.size > MAX_ALPHABET:
            raise EntropyCodingError(f"alphabet size must be in [1, {MAX_ALPHABET}], got {counts.size}")
        if counts.min() < 1:
            raise EntropyCodingError("every symbol needs a count >= 1")
        if counts.sum() > MAX_TOTAL:
            raise EntropyCodingError(f"total count {counts.sum()} exceeds {MAX_TOTAL}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_histogram(cls, hist) -> "FrequencyModel":
        """Laplace-smoothed (+1) model of ``hist``, rescaled to fit the coder's precision."""
        counts = np.asarray(hist, dtype=np.int64).ravel() + 1
        total = int(counts.sum())
        if total > MAX_TOTAL:
            budget = MAX_TOTAL - counts.size
            counts = 1 + (counts * budget) // total
        return cls(counts)

    @classmethod
    def from_symbols(cls, symbols, alphabet_size: int | None = None) -> "FrequencyModel":
        symbols = np.asarray(symbols, dtype=np.int64).ravel()
        if alphabet_size is None:
            alphabet_size = int(symbols.max()) + 1 if symbols.size else 1
        return cls.from_histogram(np.bincount(symbols, minlength=alphabet_size))

    @classmethod
    def uniform(cls, alphabet_size: int) -> "FrequencyModel":
        return cls(np.ones(alphabet_size, np.int64))

    @property
    def alphabet_size(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative table of length ``alphabet_size + 1`` starting at 0."""
        return np.concatenate([[0], np.cumsum(self.counts)])

    def bits(self) -> np.ndarray:
        """Ideal code length of each symbol in bits."""
        return -np.log2(self.counts / self.total)

    def to_bytes(self) -> bytes:
        return struct.pack("<H", self.alphabet_size) + self.counts.astype("<u4").tobytes()

    @classmethod
    def from_buffer(cls, buf: bytes, offset: int = 0) -> tuple["FrequencyModel", int]:
        """Parse one serialized model; returns it and the offset just past it."""
        if len(buf) < offset + 2:
            raise EntropyCodingError("truncated frequency model header")
        (n,) = struct.unpack_from("<H", buf, offset)
        end = offset + 2 + 4 * n
        if len(buf) < end:
            raise EntropyCodingError("truncated frequency model counts")
        counts = np.frombuffer(buf, "<u4", n, offset + 2)
        return cls(counts), end

    def __eq__(self, other):
        return isinstance(other, FrequencyModel) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"FrequencyModel(alphabet={self.alphabet_size}, total={self.total})"


@dataclass(frozen=True)
class Bitstream:
    data: bytes
    bit_length: int

    def __post_init__(self):
        if self.bit_length < 0:
            raise EntropyCodingError("negative bit length")


def _tables(models: Sequence[FrequencyModel], extra_bits: Sequence[np.ndarray] | None):
    width = max(m.alphabet_size for m in models)
    cum = np.empty((len(models), width + 1), np.int64)
    extra = np.zeros((len(models), width), np.int64)
    for i, m in enumerate(models):
        c = m.cumulative
        cum[i, : c.size] = c
        cum[i, c.size :] = c[-1]
        if extra_bits is not None and extra_bits[i] is not None:
            e = np.asarray(extra_bits[i], np.int64)
            if e.size != m.alphabet_size:
                raise EntropyCodingError("extra-bit table does not match model alphabet")
            extra[i, : e.size] = e
    alpha = np.array([m.alphabet_size for m in models], np.int64)
    return cum, alpha, extra


def encode_multi(
    symbols,
    model_ids,
    models: Sequence[FrequencyModel],
    *,
    extra_bits: Sequence[np.ndarray] | None = None,
    raw=None,
) -> Bitstream:
    """Range-code ``symbols[i]`` under ``models[model_ids[i]]``.

    When ``extra_bits`` is given, symbol ``s`` coded under model ``m`` is
    followed by ``extra_bits[m][s]`` raw bits taken from ``raw[i]``.
    """
    symbols = np.ascontiguousarray(symbols, dtype=np.int64).ravel()
    model_ids = np.ascontiguousarray(model_ids, dtype=np.int64).ravel()
    if model_ids.size != symbols.size:
        raise EntropyCodingError("model_ids and symbols differ in length")
    if not models:
        raise EntropyCodingError("at least one model is required")
    cum, alpha, extra = _tables(models, extra_bits)
    if symbols.size:
        if model_ids.min() < 0 or model_ids.max() >= len(models):
            raise EntropyCodingError("model id out of range")
        if symbols.min() < 0 or (symbols >= alpha[model_ids]).any():
            bad = int(np.flatnonzero((symbols < 0) | (symbols >= alpha[model_ids]))[0])
            raise EntropyCodingError(f"symbol {symbols[bad]} at position {bad} is outside its alphabet")
    raw = np.zeros(symbols.size, np.int64) if raw is None else np.ascontiguousarray(raw, np.int64).ravel()
    if raw.size != symbols.size:
        raise EntropyCodingError("raw and symbols differ in length")
    # one coding step shifts out at most 4 bytes
    max_extra = int(extra.max()) if extra.size else 0
    bound = 8 + symbols.size * (4 + 4 * ((max_extra + 15) // 16))
    out = np.empty(bound, np.uint8)
    nbytes, nbits = rc.encode(symbols, model_ids, cum, extra, raw, out)
    return Bitstream(out[:nbytes].tobytes(), int(nbits))


def decode_multi(
    stream: Bitstream,
    model_ids,
    models: Sequence[FrequencyModel],
    *,
    extra_bits: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`encode_multi`; returns (symbols, raw)."""
    model_ids = np.ascontiguousarray(model_ids, dtype=np.int64).ravel()
    n = model_ids.size
    if 8 * len(stream.data) < stream.bit_length:
        raise TruncatedStreamError(
            f"stream holds {len(stream.data)} bytes but declares {stream.bit_length} bits"
        )
    if len(stream.data) > (stream.bit_length + 7) // 8:
        raise EntropyCodingError("stream has trailing bytes beyond its bit length")
    if not models:
        raise EntropyCodingError("at least one model is required")
    if n and (model_ids.min() < 0 or model_ids.max() >= len(models)):
        raise EntropyCodingError("model id out of range")
    cum, alpha, extra = _tables(models, extra_bits)
    symbols = np.zeros(n, np.int64)
    raw = np.zeros(n, np.int64)
    data = np.frombuffer(stream.data, np.uint8)
    status, shifts = rc.decode(data, n, model_ids, cum, alpha, extra, symbols, raw)
    if status == rc.ERR_OVERRUN:
        raise TruncatedStreamError("decoder ran past the end of the stream")
    if status != rc.OK:
        raise EntropyCodingError("corrupt range-coded stream")
    tail = stream.bit_length - 8 * shifts
    if not 0 <= tail <= 32:
        raise TruncatedStreamError(
            f"decoded {n} symbols from {shifts} bytes, inconsistent with {stream.bit_length} bits"
        )
    return symbols, raw


def range_encode(symbols, model: FrequencyModel) -> Bitstream:
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    return encode_multi(symbols, np.zeros(symbols.size, np.int64), [model])


def range_decode(stream: Bitstream, model: FrequencyModel, n: int) -> np.ndarray:
    symbols, _ = decode_multi(stream, np.zeros(n, np.int64), [model])
    return symbols


def estimate_bits(symbols, model: FrequencyModel) -> float:
    """Ideal code length of ``symbols`` under ``model``: sum of -log2 p(s)."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    if symbols.size and (symbols.min() < 0 or symbols.max() >= model.alphabet_size):
        raise EntropyCodingError("symbol outside the model alphabet has zero probability")
    return float(model.bits()[symbols].sum()) if symbols.size else 0.0
