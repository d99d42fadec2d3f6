"""Core value types and their on-disk containers.

Containers:

* images: binary PPM (``P6``, maxval 255)
* point clouds: KITTI velodyne layout, 4 little-endian float32 per point
  (x, y, z, intensity)
* range grids: ``RGRD`` header, packed occupancy bitmap, float32 triples for
  the occupied bins in row-major order
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError

PathLike = Union[str, os.PathLike]

GRID_MAGIC = b"RGRD"
_GRID_HEADER = struct.Struct("<4sHHII")
_GRID_FLAG_CONFIG = 0x1
_GRID_CONFIG = struct.Struct("<ddd")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image8:
    """8-bit RGB raster, stored as an (height, width, 3) uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.uint8:
            raise ValueError(f"Image8 needs uint8 samples, got {data.dtype}")
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"Image8 needs shape (h, w, 3), got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("Image8 width and height must be >= 1")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 3

    def __eq__(self, other):
        if not isinstance(other, Image8):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image8({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Unordered lidar returns as an (n, 4) float32 array of x, y, z, intensity."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 4)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"PointCloud needs shape (n, 4), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("PointCloud contains non-finite values")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def from_xyz(cls, xyz, intensity=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float32).reshape(-1, 3)
        inten = np.zeros(len(xyz), np.float32) if intensity is None else np.asarray(intensity, np.float32)
        return cls(np.column_stack([xyz, inten]))

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and np.array_equal(
            self.points.view(np.uint32), other.points.view(np.uint32)
        )

    def __repr__(self):
        return f"PointCloud(n={len(self)})"


@dataclass(frozen=True)
class GridConfig:
    """Shape and field of view of a range grid (angles in degrees, range in meters)."""

    h: int = 64
    w: int = 512
    elev_max: float = 2.0
    elev_min: float = -24.8
    r_max: float = 120.0

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ValueError("grid h and w must be >= 1")
        if not self.elev_max > self.elev_min:
            raise ValueError("elev_max must exceed elev_min")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if self.h > 0xFFFF or self.w > 0xFFFF:
            raise ValueError("grid h and w must fit in 16 bits")


@dataclass(frozen=True, eq=False)
class RangeGrid:
    """Averaged (x, y, z) per bin plus occupancy.

    ``coords`` is (h, w, 3) float32 and is zero wherever ``occupancy`` is false.
    """

    config: GridConfig
    occupancy: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        cfg = self.config
        occ = np.asarray(self.occupancy, dtype=bool)
        coords = np.asarray(self.coords, dtype=np.float32)
        if occ.shape != (cfg.h, cfg.w):
            raise ValueError(f"occupancy shape {occ.shape} != {(cfg.h, cfg.w)}")
        if coords.shape != (cfg.h, cfg.w, 3):
            raise ValueError(f"coords shape {coords.shape} != {(cfg.h, cfg.w, 3)}")
        if not np.isfinite(coords[occ]).all():
            raise ValueError("occupied bins must hold finite coordinates")
        coords = np.where(occ[..., None], coords, np.float32(0))
        object.__setattr__(self, "occupancy", _frozen(occ))
        object.__setattr__(self, "coords", _frozen(coords))

    @classmethod
    def empty(cls, config: GridConfig) -> "RangeGrid":
        return cls(config, np.zeros((config.h, config.w), bool), np.zeros((config.h, config.w, 3), np.float32))

    @property
    def n_occupied(self) -> int:
        return int(self.occupancy.sum())

    def __eq__(self, other):
        if not isinstance(other, RangeGrid):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.occupancy, other.occupancy)
            and np.array_equal(self.coords.view(np.uint32), other.coords.view(np.uint32))
        )

    def __repr__(self):
        return f"RangeGrid({self.config.h}x{self.config.w}, occupied={self.n_occupied})"


@dataclass(frozen=True, eq=False)
class NormalizedGrid:
    """Range grid mapped to [0, 1] per channel, ready for an image codec."""

    config: GridConfig
    values: np.ndarray
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        cfg = self.config
        vals = np.asarray(self.values, dtype=np.float64)
        occ = np.asarray(self.occupancy, dtype=bool)
        if vals.shape != (cfg.h, cfg.w, 3) or occ.shape != (cfg.h, cfg.w):
            raise ValueError("NormalizedGrid shapes do not match its config")
        if vals.size and (np.nanmin(vals) < 0.0 or np.nanmax(vals) > 1.0 or not np.isfinite(vals).all()):
            raise ValueError("NormalizedGrid values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "occupancy", _frozen(occ))


# --------------------------------------------------------------------------
# images


def _ppm_header(buf: bytes) -> tuple[list[bytes], int]:
    """Return the magic plus three header tokens and the offset of the pixel data."""
    tokens: list[bytes] = []
    i, n = 0, len(buf)
    while len(tokens) < 4:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("truncated PPM header")
        tokens.append(buf[start:i])
        if len(tokens) == 1 and tokens[0] != b"P6":
            raise FormatError(f"unsupported image magic {tokens[0][:8]!r}, expected P6")
    if i >= n or not buf[i : i + 1].isspace():
        raise FormatError("PPM header must end with a single whitespace byte")
    return tokens, i + 1


def decode_ppm(buf: bytes) -> Image8:
    tokens, offset = _ppm_header(buf)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"non-numeric PPM header field: {exc}") from None
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM (maxval 255) is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError("PPM width and height must be >= 1")
    size = width * height * 3
    if len(buf) - offset < size:
        raise FormatError(f"truncated PPM pixel data: need {size} bytes, have {len(buf) - offset}")
    data = np.frombuffer(buf, dtype=np.uint8, count=size, offset=offset)
    return Image8(data.reshape(height, width, 3))


def encode_ppm(image: Image8) -> bytes:
    return b"P6\n%d %d\n255\n" % (image.width, image.height) + image.data.tobytes()


def load_image(path: PathLike) -> Image8:
    return decode_ppm(Path(path).read_bytes())


# --------------------------------------------------------------------------
# point clouds


def decode_pointcloud(buf: bytes) -> PointCloud:
    if len(buf) % 16:
        raise FormatError(f"point cloud size {len(buf)} is not a multiple of 16 bytes")
    pts = np.frombuffer(buf, dtype="<f4").reshape(-1, 4)
    if not np.isfinite(pts).all():
        raise FormatError("point cloud contains non-finite values")
    return PointCloud(pts.astype(np.float32))


def encode_pointcloud(cloud: PointCloud) -> bytes:
    return cloud.points.astype("<f4").tobytes()


def load_pointcloud(path: PathLike) -> PointCloud:
    return decode_pointcloud(Path(path).read_bytes())


# --------------------------------------------------------------------------
# range grids


def encode_grid(grid: RangeGrid) -> bytes:
    cfg = grid.config
    header = _GRID_HEADER.pack(GRID_MAGIC, cfg.h, cfg.w, _GRID_FLAG_CONFIG, 0)
    bitmap = np.packbits(grid.occupancy.ravel()).tobytes()
    coords = grid.coords[grid.occupancy].astype("<f4").tobytes()
    trailer = _GRID_CONFIG.pack(cfg.elev_max, cfg.elev_min, cfg.r_max)
    return header + bitmap + coords + trailer


def decode_grid(buf: bytes) -> RangeGrid:
    if len(buf) < _GRID_HEADER.size:
        raise FormatError("truncated range grid header")
    magic, h, w, flags, _reserved = _GRID_HEADER.unpack_from(buf)
    if magic != GRID_MAGIC:
        raise FormatError(f"bad range grid magic {magic!r}")
    if h < 1 or w < 1:
        raise FormatError("range grid dimensions must be >= 1")
    pos = _GRID_HEADER.size
    nbitmap = (h * w + 7) // 8
    if len(buf) < pos + nbitmap:
        raise FormatError("truncated occupancy bitmap")
    occ = np.unpackbits(np.frombuffer(buf, np.uint8, nbitmap, pos), count=h * w).astype(bool).reshape(h, w)
    pos += nbitmap
    k = int(occ.sum())
    if len(buf) < pos + 12 * k:
        raise FormatError("truncated range grid coordinates")
    vals = np.frombuffer(buf, "<f4", 3 * k, pos).reshape(k, 3)
    pos += 12 * k
    if not np.isfinite(vals).all():
        raise FormatError("range grid holds non-finite coordinates")
    if flags & _GRID_FLAG_CONFIG:
        if len(buf) < pos + _GRID_CONFIG.size:
            raise FormatError("truncated range grid config trailer")
        elev_max, elev_min, r_max = _GRID_CONFIG.unpack_from(buf, pos)
        try:
            cfg = GridConfig(h, w, elev_max, elev_min, r_max)
        except ValueError as exc:
            raise FormatError(f"invalid grid config trailer: {exc}") from None
    else:
        cfg = GridConfig(h, w)
    coords = np.zeros((h, w, 3), np.float32)
    coords[occ] = vals
    return RangeGrid(cfg, occ, coords)


def load_grid(path: PathLike) -> RangeGrid:
    return decode_grid(Path(path).read_bytes())


def save_artifact(obj: Image8 | PointCloud | RangeGrid, path: PathLike) -> None:
    """Write ``obj`` in its container format; ``load_*`` reverses this bit-exactly."""
    if isinstance(obj, Image8):
        blob = encode_ppm(obj)
    elif isinstance(obj, PointCloud):
        blob = encode_pointcloud(obj)
    elif isinstance(obj, RangeGrid):
        blob = encode_grid(obj)
    else:
        raise TypeError(f"cannot save {type(obj).__name__}")
    Path(path).write_bytes(blob)


def load_artifact(path: PathLike) -> Image8 | PointCloud | RangeGrid:
    """Load by sniffing the content: PPM magic, RGRD magic, else KITTI binary."""
    buf = Path(path).read_bytes()
    if buf[:2] == b"P6":
        return decode_ppm(buf)
    if buf[:4] == GRID_MAGIC:
        return decode_grid(buf)
    return decode_pointcloud(buf)
