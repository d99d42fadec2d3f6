"""Rate-distortion training for :class:`AeModel`.

Rounding is replaced by additive uniform noise during training. The rate is
the cross-entropy of the noisy latents under a per-channel density built from
the batch itself: a triangle-kernel (soft) histogram over integer bins,
Laplace-smoothed and linearly interpolated, so it is differentiable in the
latents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..datamodel import Image8, NormalizedGrid
from .ae import AeConfig, AeModel

HIST_RADIUS = 32
HIST_ALPHA = 1.0


def soft_histogram_bits(y: torch.Tensor, q: float = 1.0, radius: int = HIST_RADIUS,
                        alpha: float = HIST_ALPHA) -> torch.Tensor:
    """Total code length in bits of ``y`` (N, C, H, W), one density per channel."""
    n, c = y.shape[:2]
    v = (y / q).transpose(0, 1).reshape(c, -1)
    centers = torch.arange(-radius, radius + 1, dtype=y.dtype)
    weights = torch.clamp(1.0 - (v[:, :, None] - centers).abs(), min=0.0)  # (C, M, B)
    hist = weights.sum(dim=1) + alpha
    p = hist / hist.sum(dim=1, keepdim=True)
    # linear interpolation of the bin probabilities at each value
    vc = v.clamp(-radius, radius)
    lo = torch.floor(vc).clamp(max=radius - 1)
    frac = vc - lo
    idx = (lo + radius).long()
    p_lo = torch.gather(p, 1, idx)
    p_hi = torch.gather(p, 1, idx + 1)
    dens = p_lo * (1.0 - frac) + p_hi * frac
    return -torch.log2(dens).sum()


def rd_objective(model: AeModel, x: torch.Tensor, lam: float, noise: torch.Tensor | None = None):
    """(loss, mse, bpp) of one batch. ``noise`` defaults to U(-q/2, q/2)."""
    q = model.config.q
    y = model.encode(x)
    if noise is None:
        noise = (torch.rand_like(y) - 0.5) * q
    y_tilde = y + noise
    x_hat = model.decode(y_tilde)
    mse = torch.mean((x_hat - x) ** 2)
    pixels = x.shape[0] * x.shape[2] * x.shape[3]
    bpp = soft_histogram_bits(y_tilde, q) / pixels
    return mse + lam * bpp, mse, bpp


def as_array(item) -> np.ndarray:
    """HxWx3 float32 in [0, 1] from an Image8, NormalizedGrid or array."""
    if isinstance(item, Image8):
        return item.data.astype(np.float32) / 255.0
    if isinstance(item, NormalizedGrid):
        return item.values.astype(np.float32)
    a = np.asarray(item)
    if a.dtype == np.uint8:
        return a.astype(np.float32) / 255.0
    return a.astype(np.float32)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.01
    steps: int = 500
    lr: float = 1e-4
    batch: int = 8
    crop: int = 64
    seed: int = 0
    model: AeConfig = field(default_factory=AeConfig)

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch <= 0 or self.crop <= 0:
            raise ValueError("batch and crop sizes must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.crop % self.model.stride:
            raise ValueError(f"crop must be a multiple of {self.model.stride}")


@dataclass
class TrainResult:
    model: AeModel
    losses: list[float]
    mse: list[float]
    bpp: list[float]

    def smoothed(self, window: int = 50) -> np.ndarray:
        a = np.asarray(self.losses)
        window = max(1, min(window, a.size))
        return np.convolve(a, np.ones(window) / window, mode="valid")


def train_ae(dataset, cfg: TrainConfig = TrainConfig(), init: AeModel | None = None) -> TrainResult:
    """Adam on random crops; deterministic for a fixed ``cfg.seed``.

    ``init`` starts from a copy of an existing model (its architecture wins
    over ``cfg.model``) instead of a fresh initialisation.
    """
    arrays = [as_array(d) for d in dataset]
    if not arrays:
        raise ValueError("empty training set")
    if any(a.ndim != 3 or a.shape[2] != 3 for a in arrays):
        raise ValueError("training rasters must be HxWx3")
    if any(min(a.shape[:2]) < cfg.crop for a in arrays):
        raise ValueError(f"all training rasters must be at least {cfg.crop}x{cfg.crop}")
    base = cfg.model if init is None else init.config
    mcfg = base if base.lam == cfg.lam else AeConfig(**{**base.__dict__, "lam": cfg.lam})
    if cfg.crop % mcfg.stride:
        raise ValueError(f"crop must be a multiple of {mcfg.stride}")

    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        model = AeModel(mcfg)
        if init is not None:
            model.load_state_dict(init.state_dict())
        model.train()
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        losses, mses, bpps = [], [], []
        c = cfg.crop
        for _ in range(cfg.steps):
            which = rng.integers(0, len(arrays), cfg.batch)
            batch = np.empty((cfg.batch, c, c, 3), np.float32)
            for j, k in enumerate(which):
                a = arrays[k]
                r0 = rng.integers(0, a.shape[0] - c + 1)
                c0 = rng.integers(0, a.shape[1] - c + 1)
                batch[j] = a[r0 : r0 + c, c0 : c0 + c]
            x = torch.from_numpy(batch.transpose(0, 3, 1, 2).copy())
            loss, mse, bpp = rd_objective(model, x, cfg.lam)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            mses.append(mse.item())
            bpps.append(bpp.item())
    finally:
        torch.set_num_threads(threads)
    model.eval()
    return TrainResult(model, losses, mses, bpps)
