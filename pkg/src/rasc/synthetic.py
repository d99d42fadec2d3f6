"""Seeded synthetic sensor data: lidar sweeps and street-like camera frames."""

from __future__ import annotations

import numpy as np

from .datamodel import GridConfig, Image8, PointCloud

SENSOR_HEIGHT = 1.73


def ring_elevations(cfg: GridConfig = GridConfig(), rings: int | None = None) -> np.ndarray:
    """Elevation angles (degrees) at the centres of ``rings`` equal slices of the FOV."""
    rings = cfg.h if rings is None else rings
    step = (cfg.elev_max - cfg.elev_min) / rings
    return cfg.elev_max - (np.arange(rings) + 0.5) * step


def _ray_boxes(dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance of unit rays from the origin against AABBs."""
    best = np.full(dirs.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for lo, hi in zip(boxes[:, 0], boxes[:, 1]):
        t1 = lo * inv
        t2 = hi * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (tmax >= np.maximum(tmin, 0)) & (tmin > 0)
        best = np.where(hit & (tmin < best), tmin, best)
    return best


def synthetic_scan(seed: int = 0, rings: int = 64, steps: int = 2048,
                   cfg: GridConfig = GridConfig(), noise: float = 0.02) -> PointCloud:
    """Ray-cast a street canyon (ground, two facades, parked boxes).

    Rays sit at the centre elevation of each ring and at the centre of each
    azimuth step, so with ``rings == cfg.h`` and ``steps == cfg.w`` every
    occupied grid bin receives exactly one point.
    """
    rng = np.random.default_rng(seed)
    elev = np.radians(ring_elevations(cfg, rings))
    azim = -np.pi + (np.arange(steps) + 0.5) * (2 * np.pi / steps)
    el, az = np.meshgrid(elev, azim, indexing="ij")
    dirs = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], -1).reshape(-1, 3)

    left, right = rng.uniform(5, 14), rng.uniform(5, 14)
    boxes = []
    for _ in range(rng.integers(4, 12)):
        cx = rng.uniform(-40, 40)
        side = rng.choice([-1, 1])
        cy = side * rng.uniform(2, 4.5)
        length, width, height = rng.uniform(3.5, 5), rng.uniform(1.6, 2), rng.uniform(1.3, 1.9)
        boxes.append([[cx - length / 2, cy - width / 2, -SENSOR_HEIGHT],
                      [cx + length / 2, cy + width / 2, -SENSOR_HEIGHT + height]])
    boxes = np.array(boxes)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, -SENSOR_HEIGHT / dirs[:, 2], np.inf)
        t_left = np.where(dirs[:, 1] > 0, left / dirs[:, 1], np.inf)
        t_right = np.where(dirs[:, 1] < 0, -right / dirs[:, 1], np.inf)
    t = np.minimum.reduce([t_ground, t_left, t_right, _ray_boxes(dirs, boxes)])
    keep = np.isfinite(t) & (t < cfg.r_max * 0.98)
    t = t[keep] * (1.0 + noise * rng.standard_normal(keep.sum()))
    t = np.minimum(t, cfg.r_max * 0.99)
    xyz = dirs[keep] * t[:, None]
    intensity = rng.uniform(0, 1, xyz.shape[0])
    return PointCloud.from_xyz(xyz, intensity)


def _smooth_noise(rng, h, w, scale):
    coarse = rng.standard_normal((h // scale + 2, w // scale + 2))
    yi = np.linspace(0, coarse.shape[0] - 1.001, h)
    xi = np.linspace(0, coarse.shape[1] - 1.001, w)
    y0, x0 = yi.astype(int), xi.astype(int)
    fy, fx = (yi - y0)[:, None], (xi - x0)[None, :]
    c = coarse
    return ((1 - fy) * (1 - fx) * c[y0][:, x0] + (1 - fy) * fx * c[y0][:, x0 + 1]
            + fy * (1 - fx) * c[y0 + 1][:, x0] + fy * fx * c[y0 + 1][:, x0 + 1])


def synthetic_frame(seed: int = 0, height: int = 256, width: int = 256) -> Image8:
    """A camera-like frame: sky, facades with windows, road, a few vehicles."""
    rng = np.random.default_rng(seed)
    h, w = height, width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3))
    horizon = int(h * rng.uniform(0.35, 0.5))

    sky_top, sky_bot = rng.uniform([60, 110, 170], [120, 160, 230]), rng.uniform([170, 190, 210], [220, 230, 245])
    f = (yy / max(horizon, 1))[..., None]
    img[:] = sky_top * (1 - f) + sky_bot * f

    # facades
    x = 0
    while x < w:
        bw = int(rng.uniform(0.15, 0.35) * w) + 1
        top = int(rng.uniform(0.05, 0.3) * h)
        color = rng.uniform(60, 200, 3)
        img[top:horizon + h // 10, x:x + bw] = color
        win = rng.uniform(20, 90, 3)
        step_x, step_y = rng.integers(8, 16), rng.integers(10, 18)
        for wy in range(top + 4, horizon, step_y):
            for wx in range(x + 3, x + bw - 6, step_x):
                img[wy:wy + step_y // 2, wx:wx + step_x // 2] = win
        x += bw

    # road with lane markings
    road = yy >= horizon + h // 10
    img[road] = rng.uniform(70, 110) + np.zeros(3)
    for k in range(6):
        y0 = horizon + h // 10 + k * (h - horizon) // 6
        img[y0:y0 + 3, w // 2 - 2:w // 2 + 2] = 230

    # vehicles
    for _ in range(rng.integers(2, 5)):
        cw = int(rng.uniform(0.12, 0.25) * w)
        ch = int(cw * rng.uniform(0.45, 0.7))
        cx = int(rng.uniform(0, w - cw))
        cy = int(rng.uniform(horizon + h // 10 - ch // 2, h - ch))
        body = rng.uniform(20, 230, 3)
        img[cy:cy + ch, cx:cx + cw] = body
        img[cy + ch // 6:cy + ch // 2, cx + cw // 6:cx + 5 * cw // 6] = body * 0.4 + 60
        r = max(2, ch // 5)
        for wx in (cx + cw // 5, cx + 4 * cw // 5):
            wheel = (yy - (cy + ch)) ** 2 + (xx - wx) ** 2 < r * r
            img[wheel] = 25

    img += 6.0 * _smooth_noise(rng, h, w, 8)[..., None]
    img += 2.0 * rng.standard_normal(img.shape)
    return Image8(np.clip(np.round(img), 0, 255).astype(np.uint8))


def synthetic_crops(n: int = 32, size: int = 64, seed: int = 0) -> list[Image8]:
    """``n`` random ``size``x``size`` crops from synthetic frames."""
    rng = np.random.default_rng(seed)
    frames = [synthetic_frame(seed * 1000 + k) for k in range(max(1, n // 4))]
    out = []
    for i in range(n):
        f = frames[i % len(frames)].data
        r = rng.integers(0, f.shape[0] - size + 1)
        c = rng.integers(0, f.shape[1] - size + 1)
        out.append(Image8(f[r:r + size, c:c + size].copy()))
    return out
