import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import shannon_bits
from rasc.entropy import (
    MAX_TOTAL, Bitstream, FrequencyModel, decode_multi, encode_multi, estimate_bits, range_decode, range_encode,
)
from rasc.errors import EntropyCodingError, TruncatedStreamError


def skewed_model(rng, alphabet):
    counts = rng.integers(1, 1000, alphabet)
    counts[rng.integers(0, alphabet)] += 20000
    return FrequencyModel.from_histogram(counts)


def test_model_validation():
    with pytest.raises(EntropyCodingError):
        FrequencyModel(np.array([3, 0, 1]))
    with pytest.raises(EntropyCodingError):
        FrequencyModel(np.array([], np.int64))
    with pytest.raises(EntropyCodingError):
        FrequencyModel(np.array([MAX_TOTAL, 1]))


def test_from_histogram_rescales_into_precision():
    m = FrequencyModel.from_histogram(np.full(300, 10**6))
    assert m.total <= MAX_TOTAL
    assert (m.counts >= 1).all()
    assert len(set(m.counts.tolist())) == 1


def test_model_serialization(rng):
    m = skewed_model(rng, 37)
    blob = b"xx" + m.to_bytes()
    back, end = FrequencyModel.from_buffer(blob, 2)
    assert back == m and end == len(blob)
    with pytest.raises(EntropyCodingError):
        FrequencyModel.from_buffer(blob[:-1], 2)


def test_length_close_to_shannon(rng):
    m = skewed_model(rng, 64)
    p = m.counts / m.total
    sym = rng.choice(64, size=50000, p=p)
    bs = range_encode(sym, m)
    ideal = shannon_bits(sym, m.counts)
    assert ideal <= bs.bit_length <= ideal * 1.01 + 64
    assert estimate_bits(sym, m) == pytest.approx(ideal, rel=1e-12)
    assert np.array_equal(range_decode(bs, m, sym.size), sym)


def test_empty_and_single_symbol_alphabet():
    m = FrequencyModel.uniform(1)
    bs = range_encode(np.zeros(1000, np.int64), m)
    assert bs.bit_length <= 64
    assert np.array_equal(range_decode(bs, m, 1000), np.zeros(1000))
    bs = range_encode(np.zeros(0, np.int64), FrequencyModel.uniform(5))
    assert range_decode(bs, FrequencyModel.uniform(5), 0).size == 0


def test_out_of_alphabet_symbol():
    with pytest.raises(EntropyCodingError):
        range_encode([0, 1, 5], FrequencyModel.uniform(4))
    with pytest.raises(EntropyCodingError):
        estimate_bits([4], FrequencyModel.uniform(4))


def test_multi_model_with_raw_bits(rng):
    models = [skewed_model(rng, a) for a in (3, 17, 200)]
    extra = [np.array([0, 1, 5]), np.arange(17) % 9, np.zeros(200, np.int64)]
    ids = rng.integers(0, 3, 20000)
    sym = np.array([rng.integers(0, models[i].alphabet_size) for i in ids])
    nbits = np.array([extra[i][s] for i, s in zip(ids, sym)])
    raw = rng.integers(0, 1 << 30, ids.size) & ((1 << nbits) - 1)
    bs = encode_multi(sym, ids, models, extra_bits=extra, raw=raw)
    s2, r2 = decode_multi(bs, ids, models, extra_bits=extra)
    assert np.array_equal(s2, sym) and np.array_equal(r2, raw)
    ideal = sum(shannon_bits(sym[ids == i], models[i].counts) for i in range(3)) + nbits.sum()
    assert bs.bit_length <= ideal * 1.01 + 64


def test_truncation_detected(rng):
    m = skewed_model(rng, 50)
    sym = rng.choice(50, size=5000, p=m.counts / m.total)
    bs = range_encode(sym, m)
    with pytest.raises(TruncatedStreamError):
        range_decode(Bitstream(bs.data[: len(bs.data) // 2], bs.bit_length), m, sym.size)
    short = len(bs.data) // 2
    with pytest.raises(EntropyCodingError):
        range_decode(Bitstream(bs.data[:short], 8 * short), m, sym.size)
    with pytest.raises(EntropyCodingError):
        range_decode(Bitstream(bs.data + b"\0", bs.bit_length), m, sym.size)


def test_corruption_never_crashes(rng):
    m = skewed_model(rng, 50)
    sym = rng.choice(50, size=2000, p=m.counts / m.total)
    bs = range_encode(sym, m)
    for _ in range(200):
        data = bytearray(bs.data)
        data[rng.integers(0, len(data))] ^= 1 << int(rng.integers(0, 8))
        try:
            out = range_decode(Bitstream(bytes(data), bs.bit_length), m, sym.size)
        except EntropyCodingError:
            continue
        assert out.shape == sym.shape and out.min() >= 0 and out.max() < 50


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 500), min_size=1, max_size=40), st.integers(0, 2000), st.integers(0, 2**32 - 1))
def test_roundtrip_property(counts, n, seed):
    m = FrequencyModel(np.array(counts))
    rng = np.random.default_rng(seed)
    sym = rng.integers(0, m.alphabet_size, n)
    bs = range_encode(sym, m)
    assert np.array_equal(range_decode(bs, m, n), sym)
    assert bs.bit_length <= shannon_bits(sym, m.counts) * 1.01 + 64
