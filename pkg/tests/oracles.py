"""Slow, direct reference implementations used to check the fast paths."""

import math

import numpy as np
import torch

from rasc.codecs.ae import AeConfig, AeModel
from rasc.codecs.train import rd_objective


def shannon_bits(symbols, counts) -> float:
    """Ideal code length of ``symbols`` under the static model ``counts``."""
    counts = np.asarray(counts, dtype=np.float64)
    p = counts / counts.sum()
    return float(-np.log2(p[np.asarray(symbols)]).sum())


def grid_bin(x, y, z, cfg):
    """Flat bin of one point with scalar math, or -1 if it falls outside."""
    rho = math.sqrt(x * x + y * y)
    r = math.sqrt(rho * rho + z * z)
    phi = math.degrees(math.atan2(z, rho))
    if r > cfg.r_max or phi < cfg.elev_min or phi > cfg.elev_max:
        return -1
    theta = math.atan2(y, x)
    col = min(cfg.w - 1, math.floor((theta + math.pi) / (2 * math.pi) * cfg.w))
    row = min(cfg.h - 1, math.floor((cfg.elev_max - phi) / (cfg.elev_max - cfg.elev_min) * cfg.h))
    return row * cfg.w + col


def grid_bins(xyz, cfg):
    return [grid_bin(float(a), float(b), float(c), cfg) for a, b, c in xyz]


def brute_grid(xyz, cfg):
    """In-bin average of every occupied bin as {bin: float32[3]}.

    Sums are exact (fsum). A mean that would re-bin into a different cell is
    replaced by the member nearest to it, first one on ties.
    """
    xyz = np.asarray(xyz, dtype=np.float32)
    members = {}
    for i, b in enumerate(grid_bins(xyz, cfg)):
        if b >= 0:
            members.setdefault(b, []).append(i)
    out = {}
    for b, idx in members.items():
        pts = xyz[idx].astype(np.float64)
        mean = np.array([math.fsum(pts[:, c]) / len(idx) for c in range(3)]).astype(np.float32)
        if grid_bin(float(mean[0]), float(mean[1]), float(mean[2]), cfg) != b:
            m = mean.astype(np.float64)
            d = [sum((float(p[c]) - float(m[c])) ** 2 for c in range(3)) for p in pts]
            mean = xyz[idx[int(np.argmin(d))]].copy()
        out[b] = mean
    return out


def dct_matrix(n=8):
    """Orthonormal DCT-II basis from its textbook definition."""
    m = np.zeros((n, n))
    for k in range(n):
        a = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for i in range(n):
            m[k, i] = a * math.cos(math.pi * (2 * i + 1) * k / (2 * n))
    return m


def _gauss2d(size=11, sigma=1.5):
    c = (size - 1) / 2
    w = [[math.exp(-((i - c) ** 2 + (j - c) ** 2) / (2 * sigma * sigma)) for j in range(size)] for i in range(size)]
    s = math.fsum(v for row in w for v in row)
    return [[v / s for v in row] for row in w]


def _ssim_map_means(x, y, peak):
    """Mean SSIM and mean contrast-structure over all full 11x11 windows."""
    w = _gauss2d()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    h, wd = len(x), len(x[0])
    ssim_sum, cs_sum, count = 0.0, 0.0, 0
    for i in range(h - 10):
        for j in range(wd - 10):
            mx = my = sxx = syy = sxy = 0.0
            for a in range(11):
                xr, yr, wr = x[i + a], y[i + a], w[a]
                for b in range(11):
                    g = wr[b]
                    u, v = xr[j + b], yr[j + b]
                    mx += g * u
                    my += g * v
                    sxx += g * u * u
                    syy += g * v * v
                    sxy += g * u * v
            vx, vy, cov = sxx - mx * mx, syy - my * my, sxy - mx * my
            cs = (2 * cov + c2) / (vx + vy + c2)
            ssim_sum += (2 * mx * my + c1) / (mx * mx + my * my + c1) * cs
            cs_sum += cs
            count += 1
    return ssim_sum / count, cs_sum / count


def _halve(x):
    h, w = len(x) // 2, len(x[0]) // 2
    return [[(x[2 * i][2 * j] + x[2 * i + 1][2 * j] + x[2 * i][2 * j + 1] + x[2 * i + 1][2 * j + 1]) / 4
             for j in range(w)] for i in range(h)]


def ms_ssim_gray(x, y, peak=255.0):
    """Multi-scale SSIM of two 2-D arrays, one loop per window and tap."""
    x = [[float(v) for v in row] for row in np.asarray(x)]
    y = [[float(v) for v in row] for row in np.asarray(y)]
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
    scales = 0
    h, w = len(x), len(x[0])
    while scales < 5 and min(h, w) >= 11:
        scales += 1
        h, w = h // 2, w // 2
    weights = [v / sum(weights[:scales]) for v in weights[:scales]]
    value = 1.0
    for s in range(scales):
        ssim, cs = _ssim_map_means(x, y, peak)
        term = ssim if s == scales - 1 else cs
        value *= max(term, 0.0) ** weights[s]
        x, y = _halve(x), _halve(y)
    return value


def spearman(a, b):
    """Spearman rank correlation (average ranks for ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            r[order[i:j + 1]] = (i + j) / 2.0 + 1
            i = j + 1
        return r
    ra, rb = ranks(a), ranks(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    return float((ra * rb).sum() / math.sqrt((ra * ra).sum() * (rb * rb).sum()))


def miniature_model(seed=0):
    torch.manual_seed(seed)
    model = AeModel(AeConfig(hidden=4, latent=2, n_layers=1)).double()
    # larger weights spread the latents over many histogram bins
    with torch.no_grad():
        for p in model.parameters():
            p.mul_(20)
    return model


def finite_difference_worst(model, x, lam, noise, eps=1e-6):
    loss, _, _ = rd_objective(model, x, lam, noise)
    model.zero_grad()
    loss.backward()
    worst = 0.0
    for p in model.parameters():
        grad = p.grad.detach().clone().ravel()
        flat = p.data.view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + eps
                up = rd_objective(model, x, lam, noise)[0].item()
                flat[i] = old - eps
                down = rd_objective(model, x, lam, noise)[0].item()
                flat[i] = old
            fd = (up - down) / (2 * eps)
            g = grad[i].item()
            worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-8))
    return worst
