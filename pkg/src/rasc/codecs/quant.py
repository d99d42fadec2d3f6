import numpy as np


def quantize(values, q: float) -> np.ndarray:
    """Uniform scalar quantisation, ties rounded half away from zero."""
    if not q > 0:
        raise ValueError(f"quantisation step must be positive, got {q}")
    v = np.asarray(values, dtype=np.float64) / q
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


def dequantize(indices, q: float) -> np.ndarray:
    if not q > 0:
        raise ValueError(f"quantisation step must be positive, got {q}")
    return np.asarray(indices, dtype=np.float64) * q
