"""Convolutional autoencoder codec.

The encoder is a stack of stride-2 convolutions, the decoder mirrors it with
transposed convolutions. Latents are rounded to multiples of ``q`` and coded
with one frequency table per latent channel; the tables are built from the
frame itself and travel in the payload.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..datamodel import Image8, NormalizedGrid
from ..entropy import FrequencyModel, decode_multi, encode_multi
from ..errors import CodecError, EntropyCodingError, FormatError
from .loss import SWEEP_LAMBDAS
from .payload import FLAG_GRID, CodecId, EncodedPayload, decode_grid_side, encode_grid_side
from .quant import quantize

CKPT_MAGIC = b"RAEM"
CKPT_VERSION = 1
# coded latent indices are clipped to this magnitude
LATENT_LIMIT = 1 << 14

_AE_SIDE = struct.Struct("<4sB")


@dataclass(frozen=True)
class AeConfig:
    hidden: int = 32
    latent: int = 16
    n_layers: int = 3
    kernel: int = 5
    q: float = 1.0
    lam: float = 0.01
    slope: float = 0.01

    def __post_init__(self):
        if self.n_layers < 1 or self.hidden < 1 or self.latent < 1:
            raise ValueError("layer and channel counts must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if not self.q > 0:
            raise ValueError(f"quantisation step must be positive, got {self.q}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.latent > 255:
            raise ValueError("at most 255 latent channels")

    @property
    def stride(self) -> int:
        return 1 << self.n_layers


class AeModel(nn.Module):
    """Encoder/decoder pair; inputs are NCHW tensors in [0, 1]."""

    def __init__(self, config: AeConfig = AeConfig()):
        super().__init__()
        self.config = config
        k, pad = config.kernel, config.kernel // 2
        widths = [3] + [config.hidden] * (config.n_layers - 1) + [config.latent]
        enc, dec = [], []
        for i in range(config.n_layers):
            enc.append(nn.Conv2d(widths[i], widths[i + 1], k, stride=2, padding=pad))
            if i < config.n_layers - 1:
                enc.append(nn.LeakyReLU(config.slope))
        rev = widths[::-1]
        for i in range(config.n_layers):
            dec.append(nn.ConvTranspose2d(rev[i], rev[i + 1], k, stride=2, padding=pad, output_padding=1))
            if i < config.n_layers - 1:
                dec.append(nn.LeakyReLU(config.slope))
        self.encoder = nn.Sequential(*enc)
        self.decoder = nn.Sequential(*dec)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def decode(self, y: torch.Tensor) -> torch.Tensor:
        return self.decoder(y)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))

    def fingerprint(self) -> bytes:
        return hashlib.sha256(checkpoint_bytes(self)).digest()[:4]


# --------------------------------------------------------------------------
# checkpoints: magic, u16 version, u32 manifest length, JSON manifest,
# then every tensor as little-endian float32 in manifest order


def checkpoint_bytes(model: AeModel) -> bytes:
    state = model.state_dict()
    manifest = {
        "config": asdict(model.config),
        "tensors": [[name, list(t.shape)] for name, t in state.items()],
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<HI", CKPT_VERSION, len(head)))
    buf.write(head)
    for t in state.values():
        buf.write(t.detach().cpu().numpy().astype("<f4").tobytes())
    return buf.getvalue()


def checkpoint_from_bytes(data: bytes) -> AeModel:
    if data[:4] != CKPT_MAGIC:
        raise FormatError("not an autoencoder checkpoint")
    try:
        version, hlen = struct.unpack_from("<HI", data, 4)
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        manifest = json.loads(data[10 : 10 + hlen])
        model = AeModel(AeConfig(**manifest["config"]))
    except (struct.error, json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise FormatError(f"bad checkpoint manifest: {exc}") from None
    expected = {k: list(v.shape) for k, v in model.state_dict().items()}
    if {name: shape for name, shape in manifest["tensors"]} != expected:
        raise FormatError("checkpoint tensors do not match its configuration")
    pos = 10 + hlen
    state = {}
    for name, shape in manifest["tensors"]:
        n = int(np.prod(shape))
        if len(data) < pos + 4 * n:
            raise FormatError("truncated checkpoint")
        arr = np.frombuffer(data, "<f4", n, pos).reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float32))
        pos += 4 * n
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint tensors")
    model.load_state_dict(state)
    return model.eval()


def save_checkpoint(model: AeModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path) -> AeModel:
    return checkpoint_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# codec


def lambda_tag(lam: float) -> int:
    """1-based index of ``lam`` in the standard sweep, 0 for anything else."""
    for i, v in enumerate(SWEEP_LAMBDAS):
        if abs(lam - v) <= 1e-12:
            return i + 1
    return 0


def to_tensor(obj: Image8 | NormalizedGrid) -> tuple[torch.Tensor, int]:
    if isinstance(obj, Image8):
        x, kind = obj.data.astype(np.float32) / 255.0, 0
    elif isinstance(obj, NormalizedGrid):
        x, kind = obj.values.astype(np.float32), FLAG_GRID
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))[None], kind


def ae_encode(obj: Image8 | NormalizedGrid, model: AeModel) -> EncodedPayload:
    cfg = model.config
    x, kind = to_tensor(obj)
    _, ch, h, w = x.shape
    if h == 0 or w == 0 or h % cfg.stride or w % cfg.stride:
        raise CodecError(f"dimensions {w}x{h} are not multiples of {cfg.stride}")
    with torch.no_grad():
        y = model.encode(x)[0].double().numpy()
    yq = np.clip(quantize(y, cfg.q), -LATENT_LIMIT, LATENT_LIMIT)
    lo = yq.min(axis=(1, 2))
    sym = (yq - lo[:, None, None]).ravel()
    ids = np.repeat(np.arange(cfg.latent), yq[0].size)
    models = tuple(FrequencyModel.from_histogram(np.bincount(s)) for s in sym.reshape(cfg.latent, -1))
    stream = encode_multi(sym, ids, models)
    side = _AE_SIDE.pack(model.fingerprint(), cfg.latent) + lo.astype("<i2").tobytes()
    if kind:
        side += encode_grid_side(obj.config, obj.occupancy)
    return EncodedPayload(CodecId.LEARNED_AE, lambda_tag(cfg.lam), w, h, ch, kind, models, stream, side)


def latents_from_payload(payload: EncodedPayload, model: AeModel) -> tuple[np.ndarray, int]:
    """Quantised latent indices (C, h, w) and the side-info position after them."""
    cfg = model.config
    if payload.codec != CodecId.LEARNED_AE:
        raise CodecError(f"expected a LEARNED_AE payload, got {payload.codec.name}")
    h, w = payload.height, payload.width
    if h % cfg.stride or w % cfg.stride:
        raise CodecError(f"payload dimensions {w}x{h} do not fit the model stride {cfg.stride}")
    if len(payload.side) < _AE_SIDE.size:
        raise CodecError("missing latent side info")
    fp, nlat = _AE_SIDE.unpack_from(payload.side)
    if nlat != cfg.latent or len(payload.models) != nlat:
        raise CodecError(f"payload has {nlat} latent channels, model expects {cfg.latent}")
    if fp != model.fingerprint():
        raise CodecError("payload was produced by a different model")
    pos = _AE_SIDE.size + 2 * nlat
    if len(payload.side) < pos:
        raise CodecError("truncated latent offsets")
    lo = np.frombuffer(payload.side, "<i2", nlat, _AE_SIDE.size).astype(np.int64)
    lh, lw = h // cfg.stride, w // cfg.stride
    ids = np.repeat(np.arange(nlat), lh * lw)
    try:
        sym, _ = decode_multi(payload.stream, ids, payload.models)
    except EntropyCodingError as exc:
        raise CodecError(f"corrupt latent stream: {exc}") from None
    return sym.reshape(nlat, lh, lw) + lo[:, None, None], pos


def decode_latents(yq: np.ndarray, model: AeModel) -> np.ndarray:
    """Decoder output (H, W, 3) in [0, 1] for quantised latents (C, h, w)."""
    y = torch.from_numpy(yq.astype(np.float32) * np.float32(model.config.q))[None]
    with torch.no_grad():
        x = model.decode(y)[0].clamp(0.0, 1.0).numpy()
    return x.transpose(1, 2, 0)


def ae_decode(payload: EncodedPayload, model: AeModel) -> Image8 | NormalizedGrid:
    yq, pos = latents_from_payload(payload, model)
    x = decode_latents(yq, model)
    if payload.is_grid:
        config, occ, _ = decode_grid_side(payload.side[pos:], payload.height, payload.width)
        vals = x.astype(np.float64)
        vals[~occ] = 0.0
        return NormalizedGrid(config, vals, occ)
    return Image8(np.floor(x * 255.0 + 0.5).astype(np.uint8))
