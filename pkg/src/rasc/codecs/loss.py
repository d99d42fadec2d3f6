"""Rate-distortion objectives.

``rd_loss_vae`` is the plain MSE + lambda * bpp trade-off used to train the
autoencoder codec. ``rd_loss_gan`` weighs MSE and an externally supplied
LPIPS value with a rate term; only the combiner is provided here, LPIPS
itself is never computed.
"""

from __future__ import annotations

from dataclasses import dataclass

KM_DEFAULT = 0.075 * 2**-5
KP_DEFAULT = 1.0

# default rate weights for sweeps, lowest to highest
SWEEP_LAMBDAS = (0.001, 0.0025, 0.01, 0.05, 0.1)


@dataclass(frozen=True)
class RdLossConfig:
    lam: float
    k_m: float = KM_DEFAULT
    k_p: float = KP_DEFAULT

    def __post_init__(self):
        if self.lam < 0 or self.k_m < 0 or self.k_p < 0:
            raise ValueError("loss weights must be non-negative")


def _check_nonneg(**kw):
    for name, v in kw.items():
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")


def rd_loss_vae(mse: float, bpp: float, lam: float) -> float:
    _check_nonneg(mse=mse, bpp=bpp, lam=lam)
    return mse + lam * bpp


def rd_loss_gan(mse: float, lpips: float, bpp: float, cfg: RdLossConfig) -> float:
    _check_nonneg(mse=mse, lpips=lpips, bpp=bpp)
    return cfg.k_m * mse + cfg.k_p * lpips + cfg.lam * bpp
