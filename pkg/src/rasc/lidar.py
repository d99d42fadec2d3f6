"""Point cloud <-> range grid transforms.

Points are binned by azimuth (columns, 0 at theta = -pi) and elevation (rows,
row 0 is the highest elevation). Each occupied bin keeps the arithmetic mean
of the (x, y, z) of its points. Intensity is carried by :class:`PointCloud`
but not gridded.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .datamodel import GridConfig, NormalizedGrid, PointCloud, RangeGrid


def _bins(xyz: np.ndarray, cfg: GridConfig) -> np.ndarray:
    """Flat (row * w + col) bin of every point, -1 for dropped points."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    rho = np.sqrt(x * x + y * y)
    rng = np.sqrt(rho * rho + z * z)
    phi = np.degrees(np.arctan2(z, rho))
    theta = np.arctan2(y, x)
    col = np.minimum(cfg.w - 1, np.floor((theta + np.pi) / (2.0 * np.pi) * cfg.w)).astype(np.int64)
    row = np.minimum(cfg.h - 1, np.floor((cfg.elev_max - phi) / (cfg.elev_max - cfg.elev_min) * cfg.h)).astype(np.int64)
    keep = (rng <= cfg.r_max) & (phi >= cfg.elev_min) & (phi <= cfg.elev_max)
    return np.where(keep, row * cfg.w + col, -1)


@njit(cache=True, nogil=True)
def _accumulate(pts, idx, nbins):
    n = pts.shape[0]
    counts = np.zeros(nbins, np.int64)
    # Neumaier compensated sums: the result is the correctly rounded sum in
    # all but pathological cases, so the mean does not depend on point order.
    sums = np.zeros((nbins, 3), np.float64)
    comp = np.zeros((nbins, 3), np.float64)
    for i in range(n):
        b = idx[i]
        if b < 0:
            continue
        counts[b] += 1
        for c in range(3):
            v = np.float64(pts[i, c])
            s = sums[b, c]
            t = s + v
            if abs(s) >= abs(v):
                comp[b, c] += (s - t) + v
            else:
                comp[b, c] += (v - t) + s
            sums[b, c] = t
    occ = counts > 0
    out = np.zeros((nbins, 3), np.float32)
    for b in range(nbins):
        k = counts[b]
        if k:
            for c in range(3):
                out[b, c] = np.float32((sums[b, c] + comp[b, c]) / k)
    return occ, out


@njit(cache=True, nogil=True)
def _snap_to_member(out, moved, pts, idx):
    """Replace each moved bin's mean by the bin member nearest to it."""
    best_d = np.full(moved.shape[0], np.inf)
    slot = {}
    for j in range(moved.shape[0]):
        slot[moved[j]] = j
    best = np.zeros((moved.shape[0], 3), np.float32)
    for i in range(pts.shape[0]):
        b = idx[i]
        if b < 0 or b not in slot:
            continue
        j = slot[b]
        d = 0.0
        for c in range(3):
            e = np.float64(pts[i, c]) - np.float64(out[b, c])
            d += e * e
        if d < best_d[j]:
            best_d[j] = d
            for c in range(3):
                best[j, c] = pts[i, c]
    for j in range(moved.shape[0]):
        for c in range(3):
            out[moved[j], c] = best[j, c]


def bin_indices(cloud: PointCloud, cfg: GridConfig) -> np.ndarray:
    """Flat (row * w + col) bin of every point, -1 for dropped points."""
    return _bins(cloud.points[:, :3], cfg)


def pointcloud_to_grid(cloud: PointCloud, cfg: GridConfig = GridConfig()) -> RangeGrid:
    idx = _bins(cloud.points[:, :3], cfg)
    occ, coords = _accumulate(cloud.points, idx, cfg.h * cfg.w)
    # A mean can land just across a bin edge (chord effect, float32 rounding).
    # Such bins keep their nearest member instead so every stored point
    # re-bins to where it came from.
    filled = np.flatnonzero(occ)
    moved = filled[_bins(coords[filled], cfg) != filled]
    if moved.size:
        _snap_to_member(coords, moved, cloud.points, idx)
    return RangeGrid(cfg, occ.reshape(cfg.h, cfg.w), coords.reshape(cfg.h, cfg.w, 3))


def grid_to_pointcloud(grid: RangeGrid) -> PointCloud:
    """One point per occupied bin, row-major, intensity 0."""
    return PointCloud.from_xyz(grid.coords[grid.occupancy])


def normalize_grid(grid: RangeGrid) -> NormalizedGrid:
    r = grid.config.r_max
    vals = (np.clip(grid.coords.astype(np.float64), -r, r) + r) / (2.0 * r)
    vals[~grid.occupancy] = 0.0
    return NormalizedGrid(grid.config, vals, grid.occupancy)


def denormalize_grid(ngrid: NormalizedGrid) -> RangeGrid:
    r = ngrid.config.r_max
    coords = ngrid.values * (2.0 * r) - r
    coords[~ngrid.occupancy] = 0.0
    return RangeGrid(ngrid.config, ngrid.occupancy, coords.astype(np.float32))


def mean_euclidean_distance(a: RangeGrid, b: RangeGrid) -> tuple[float, int]:
    """Mean point distance over bins occupied in both grids, and how many bins that is."""
    if a.config.h != b.config.h or a.config.w != b.config.w:
        raise ValueError(f"grid shapes differ: {a.config.h}x{a.config.w} vs {b.config.h}x{b.config.w}")
    both = a.occupancy & b.occupancy
    n = int(both.sum())
    if n == 0:
        return 0.0, 0
    d = a.coords[both].astype(np.float64) - b.coords[both].astype(np.float64)
    return float(np.sqrt((d * d).sum(axis=1)).mean()), n
