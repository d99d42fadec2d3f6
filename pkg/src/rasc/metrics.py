"""Distortion, rate and detection-count metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .datamodel import Image8, NormalizedGrid
from .errors import FormatError

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
KDE_SCALE = 0.6
DETECTION_THRESHOLD = 0.7


def _samples(a, b) -> tuple[np.ndarray, np.ndarray, float]:
    """Both rasters as float64 plus their peak value."""
    if isinstance(a, Image8) and isinstance(b, Image8):
        x, y, peak = a.data, b.data, 255.0
    elif isinstance(a, NormalizedGrid) and isinstance(b, NormalizedGrid):
        x, y, peak = a.values, b.values, 1.0
    else:
        x, y = np.asarray(a), np.asarray(b)
        peak = 255.0 if x.dtype == np.uint8 else 1.0
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x.astype(np.float64), y.astype(np.float64), peak


def mse(a, b) -> float:
    x, y, _ = _samples(a, b)
    return float(np.mean((x - y) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; ``PSNR_CAP`` for identical inputs."""
    x, y, peak = _samples(a, b)
    return psnr_from_mse(float(np.mean((x - y) ** 2)), peak)


def psnr_from_mse(m: float, peak: float = 255.0) -> float:
    if m < 0:
        raise ValueError("mse must be non-negative")
    if m == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / m))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-D array with the 1-D kernel ``g``."""
    x = sliding_window_view(x, g.size, axis=0) @ g
    return sliding_window_view(x, g.size, axis=1) @ g


def ms_ssim_scales(height: int, width: int, max_scales: int = 5) -> int:
    """How many dyadic scales fit while the coarsest one still holds a window."""
    n = 0
    h, w = height, width
    while n < max_scales and min(h, w) >= SSIM_WINDOW:
        n += 1
        h, w = h // 2, w // 2
    if n == 0:
        raise ValueError(f"{width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return n


def _ssim_terms(x, y, g, c1, c2):
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim_plane(x: np.ndarray, y: np.ndarray, peak: float, scales: int) -> float:
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    g = gaussian_window()
    c1, c2 = (SSIM_K1 * peak) ** 2, (SSIM_K2 * peak) ** 2
    value = 1.0
    for j in range(scales):
        ssim, cs = _ssim_terms(x, y, g, c1, c2)
        term = ssim if j == scales - 1 else cs
        # negative contrast-structure terms have no real power; treat as 0
        value *= max(term, 0.0) ** weights[j]
        if j < scales - 1:
            x, y = _downsample(x), _downsample(y)
    return value


def ms_ssim(a, b, *, with_scales: bool = False):
    """Multi-scale SSIM, averaged over channels.

    Fewer than five scales are used when the image is too small for the
    coarsest one to contain a full window; the weights of the retained scales
    are renormalised to sum to one. ``with_scales=True`` returns
    ``(value, scales)``.
    """
    x, y, peak = _samples(a, b)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    scales = ms_ssim_scales(x.shape[0], x.shape[1])
    v = float(np.mean([ms_ssim_plane(x[..., c], y[..., c], peak, scales) for c in range(x.shape[2])]))
    v = min(1.0, max(0.0, v))
    return (v, scales) if with_scales else v


def bits_per_pixel(payload_bytes: int, width: int, height: int) -> float:
    if width <= 0 or height <= 0:
        raise ValueError("zero image area")
    if payload_bytes < 0:
        raise ValueError("negative byte count")
    return 8.0 * payload_bytes / (width * height)


# --------------------------------------------------------------------------
# kernel density estimate


def scott_bandwidth(samples, scale: float = KDE_SCALE) -> float:
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError("need at least two samples")
    sd = float(np.std(s, ddof=1))
    if sd == 0:
        raise ValueError("samples have zero spread")
    return scale * sd * s.size ** -0.2


def kde_scott(samples, eval_points, scale: float = KDE_SCALE, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian KDE at ``eval_points`` with the scaled Scott bandwidth."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    h = scott_bandwidth(s, scale) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    e = np.asarray(eval_points, dtype=np.float64)
    z = (e.ravel()[:, None] - s[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (s.size * h * math.sqrt(2 * math.pi))
    return dens.reshape(e.shape)


# --------------------------------------------------------------------------
# detection counts


@dataclass(frozen=True)
class DetectionCountRecord:
    image_id: str
    n_orig: int
    n_recon: int
    bpp: float

    def __post_init__(self):
        if self.n_orig < 0 or self.n_recon < 0:
            raise ValueError("detection counts must be non-negative")

    @property
    def excluded(self) -> bool:
        return self.n_orig == 0


def relative_detection_error(rec: DetectionCountRecord) -> float:
    """Signed percentage change of the detection count after compression."""
    if rec.n_orig == 0:
        raise ValueError(f"{rec.image_id}: no detections in the original")
    return (rec.n_recon - rec.n_orig) / rec.n_orig * 100.0


def _count(entry: dict, threshold: float, lineno: int) -> int:
    if "count" in entry:
        n = entry["count"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise FormatError(f"line {lineno}: count must be a non-negative integer")
        return n
    boxes = entry.get("boxes")
    if not isinstance(boxes, list):
        raise FormatError(f"line {lineno}: record needs 'count' or 'boxes'")
    n = 0
    for box in boxes:
        if not (isinstance(box, (list, tuple)) and len(box) == 2 and isinstance(box[0], str)
                and isinstance(box[1], (int, float)) and not isinstance(box[1], bool)):
            raise FormatError(f"line {lineno}: boxes must be [class, score] pairs")
        if box[1] >= threshold:
            n += 1
    return n


def parse_detection_report(text: str, threshold: float = DETECTION_THRESHOLD) -> list[DetectionCountRecord]:
    """Pair every ``recon`` line with the ``orig`` line of the same image.

    One JSON object per line::

        {"image_id": "000123", "role": "orig", "bpp": 24.0, "boxes": [["car", 0.91]]}
        {"image_id": "000123", "role": "recon", "bpp": 0.25, "count": 3}

    Blank lines are skipped. Records come back in order of their recon lines.
    """
    origs: dict[str, int] = {}
    recons: list[tuple[str, int, float, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if not isinstance(entry, dict):
            raise FormatError(f"line {lineno}: expected a JSON object")
        image_id, role, bpp = entry.get("image_id"), entry.get("role"), entry.get("bpp")
        if not isinstance(image_id, (str, int)) or isinstance(image_id, bool):
            raise FormatError(f"line {lineno}: missing image_id")
        if not isinstance(bpp, (int, float)) or isinstance(bpp, bool) or not bpp >= 0:
            raise FormatError(f"line {lineno}: bpp must be a non-negative number")
        n = _count(entry, threshold, lineno)
        image_id = str(image_id)
        if role == "orig":
            if image_id in origs:
                raise FormatError(f"line {lineno}: duplicate original for {image_id}")
            origs[image_id] = n
        elif role == "recon":
            recons.append((image_id, n, float(bpp), lineno))
        else:
            raise FormatError(f"line {lineno}: role must be 'orig' or 'recon'")
    out = []
    for image_id, n, bpp, lineno in recons:
        if image_id not in origs:
            raise FormatError(f"line {lineno}: no original record for {image_id}")
        out.append(DetectionCountRecord(image_id, origs[image_id], n, bpp))
    return out


def ingest_detection_report(path, threshold: float = DETECTION_THRESHOLD) -> list[DetectionCountRecord]:
    return parse_detection_report(Path(path).read_text(), threshold)


def detection_error_summary(records) -> dict:
    """Per-rate statistics of the relative detection error, plus its KDE.

    The density is tabulated on [-100, 100] in steps of 1. Images without
    detections in the original are skipped; if that leaves nothing, a
    ValueError is raised. When every error at a rate is identical the KDE
    bandwidth falls back to one grid step.
    """
    by_rate: dict[float, list[float]] = {}
    skipped = 0
    for r in records:
        if r.excluded:
            skipped += 1
            continue
        by_rate.setdefault(r.bpp, []).append(relative_detection_error(r))
    if not by_rate:
        raise ValueError("every record has zero detections in the original")
    grid = np.arange(-100.0, 101.0)
    rates = []
    for bpp in sorted(by_rate):
        errs = np.asarray(by_rate[bpp])
        try:
            bw = scott_bandwidth(errs)
        except ValueError:
            bw = 1.0
        rates.append({
            "bpp": bpp,
            "n": int(errs.size),
            "mean": float(errs.mean()),
            "share_minus_100": float(np.mean(errs == -100.0)),
            "share_zero": float(np.mean(errs == 0.0)),
            "bandwidth": bw,
            "density": kde_scott(errs, grid, bandwidth=bw).tolist(),
        })
    return {"excluded": skipped, "grid": grid.tolist(), "rates": rates}


# --------------------------------------------------------------------------
# rate-distortion tables


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    mse: float
    psnr: float
    ms_ssim: float
    lpips: float | None = None

    def __post_init__(self):
        if self.bpp < 0:
            raise ValueError("bpp must be non-negative")
        if not 0.0 <= self.ms_ssim <= 1.0:
            raise ValueError("ms_ssim must lie in [0, 1]")


def rd_point(orig, recon, payload_bytes: int) -> RdPoint:
    h, w = (orig.data.shape[:2] if isinstance(orig, Image8) else orig.values.shape[:2])
    m = mse(orig, recon)
    peak = 255.0 if isinstance(orig, Image8) else 1.0
    return RdPoint(bits_per_pixel(payload_bytes, w, h), m, psnr_from_mse(m, peak), ms_ssim(orig, recon))


def rd_csv(points) -> str:
    """CSV text sorted by bpp; the lpips column appears only if any point has one."""
    points = sorted(points, key=lambda p: (p.bpp, p.mse))
    with_lpips = any(p.lpips is not None for p in points)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["bpp", "mse", "psnr", "ms_ssim"] + (["lpips"] if with_lpips else []))
    for p in points:
        row = [repr(float(v)) for v in (p.bpp, p.mse, p.psnr, p.ms_ssim)]
        if with_lpips:
            row.append("" if p.lpips is None else repr(float(p.lpips)))
        wr.writerow(row)
    return buf.getvalue()
