"""Compiled kernels for the 32-bit range coder.

Carry-propagating coder in the LZMA style: ``low`` carries 33 bits, pending
0xFF bytes are held back until a carry can no longer reach them, and the
range is renormalised byte-wise so it always stays >= 2**24. Frequency totals
are capped at 2**16, which bounds the per-symbol truncation loss of
``rng // total``.

Symbols may be followed by raw (uniformly coded) bits; how many is looked up
in a per-model ``extra`` table indexed by symbol. Raw fields are coded in
chunks of at most 16 bits.

The very first byte a carry-propagating coder emits is always zero and is
not stored.
"""

import numpy as np
from numba import njit

TOP = 1 << 24
MASK = (1 << 32) - 1
MAX_TOTAL = 1 << 16

# decoder status codes
OK = 0
ERR_CORRUPT = 1
ERR_OVERRUN = 2


@njit(cache=True, nogil=True, inline="always")
def _shift_low(low, cache, pending, out, pos):
    if low < 0xFF000000 or low > MASK:
        carry = low >> 32
        b = cache
        while True:
            if pos >= 0:
                out[pos] = (b + carry) & 0xFF
            pos += 1
            b = 0xFF
            pending -= 1
            if pending == 0:
                break
        cache = (low >> 24) & 0xFF
    pending += 1
    low = (low & 0x00FFFFFF) << 8
    return low, cache, pending, pos


@njit(cache=True, nogil=True)
def encode(symbols, model_ids, cum, extra, raw, out):
    """Encode into ``out``; returns (bytes written, bit length).

    ``out`` must be large enough; callers size it from an upper bound.
    """
    low = np.int64(0)
    rng = np.int64(MASK)
    cache = np.int64(0)
    pending = 1
    pos = -1  # the leading zero byte is dropped
    shifts = 0
    width = cum.shape[1] - 1
    for i in range(symbols.shape[0]):
        m = model_ids[i]
        s = symbols[i]
        r = rng // cum[m, width]
        low += cum[m, s] * r
        rng = (cum[m, s + 1] - cum[m, s]) * r
        while rng < TOP:
            rng <<= 8
            low, cache, pending, pos = _shift_low(low, cache, pending, out, pos)
            shifts += 1
        nbits = extra[m, s]
        v = raw[i]
        while nbits > 0:
            k = nbits if nbits < 16 else 16
            nbits -= k
            r = rng >> k
            low += ((v >> nbits) & ((1 << k) - 1)) * r
            rng = r
            while rng < TOP:
                rng <<= 8
                low, cache, pending, pos = _shift_low(low, cache, pending, out, pos)
                shifts += 1
    # shortest prefix whose whole dyadic interval fits in [low, low + rng)
    nbits = 32
    for L in range(33):
        step = np.int64(1) << (32 - L)
        v = ((low + step - 1) // step) * step
        if v + step <= low + rng:
            nbits = L
            low = v
            break
    nbytes = (nbits + 7) // 8
    for _ in range(nbytes + 1):
        low, cache, pending, pos = _shift_low(low, cache, pending, out, pos)
    return pos, 8 * shifts + nbits


@njit(cache=True, nogil=True)
def decode(data, n, model_ids, cum, alpha, extra, symbols, raw):
    """Decode ``n`` symbols. Returns (status, renormalisation shifts).

    Bytes past the end of ``data`` read as zero; reading more than 4 bytes
    past the end is reported as an overrun.
    """
    size = data.shape[0]
    pos = 0
    code = np.int64(0)
    for _ in range(4):
        b = data[pos] if pos < size else 0
        code = (code << 8) | b
        pos += 1
    rng = np.int64(MASK)
    shifts = 0
    for i in range(n):
        m = model_ids[i]
        a = alpha[m]
        total = cum[m, a]
        r = rng // total
        target = code // r
        if target >= total:
            return ERR_CORRUPT, shifts
        # largest s with cum[m, s] <= target
        lo = 0
        hi = a
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cum[m, mid] <= target:
                lo = mid
            else:
                hi = mid
        s = lo
        symbols[i] = s
        code -= cum[m, s] * r
        rng = (cum[m, s + 1] - cum[m, s]) * r
        while rng < TOP:
            b = data[pos] if pos < size else 0
            pos += 1
            shifts += 1
            code = (code << 8) | b
            rng <<= 8
        nbits = extra[m, s]
        acc = np.int64(0)
        while nbits > 0:
            k = nbits if nbits < 16 else 16
            nbits -= k
            r = rng >> k
            chunk = code // r
            if chunk >= (1 << k):
                return ERR_CORRUPT, shifts
            acc = (acc << k) | chunk
            code -= chunk * r
            rng = r
            while rng < TOP:
                b = data[pos] if pos < size else 0
                pos += 1
                shifts += 1
                code = (code << 8) | b
                rng <<= 8
        raw[i] = acc
        if pos > size + 4:
            return ERR_OVERRUN, shifts
    return OK, shifts
