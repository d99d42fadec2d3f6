"""Lossy codecs over Image8 / NormalizedGrid and a codec-agnostic dispatcher."""

from __future__ import annotations

from ..errors import CodecError
from .ae import AeConfig, AeModel, ae_decode, ae_encode, load_checkpoint, save_checkpoint
from .dct import dct_decode, dct_encode
from .loss import KM_DEFAULT, KP_DEFAULT, SWEEP_LAMBDAS, RdLossConfig, rd_loss_gan, rd_loss_vae
from .payload import CodecId, EncodedPayload
from .quant import dequantize, quantize
from .train import TrainConfig, TrainResult, train_ae

__all__ = [
    "AeConfig", "AeModel", "CodecId", "EncodedPayload", "KM_DEFAULT", "KP_DEFAULT", "SWEEP_LAMBDAS",
    "RdLossConfig", "TrainConfig", "TrainResult", "ae_decode", "ae_encode", "dct_decode", "dct_encode",
    "decode", "dequantize", "encode", "load_checkpoint", "quantize", "rd_loss_gan", "rd_loss_vae",
    "save_checkpoint", "train_ae",
]


def encode(obj, codec: CodecId, quality: int = 75, model: AeModel | None = None) -> EncodedPayload:
    """``quality`` only applies to the block codec; the autoencoder needs ``model``."""
    codec = CodecId(codec)
    if codec == CodecId.BLOCK_DCT:
        return dct_encode(obj, quality)
    if model is None:
        raise CodecError("the learned codec needs a trained model")
    return ae_encode(obj, model)


def decode(payload: EncodedPayload | bytes, model: AeModel | None = None):
    if not isinstance(payload, EncodedPayload):
        payload = EncodedPayload.from_bytes(payload)
    if payload.codec == CodecId.BLOCK_DCT:
        return dct_decode(payload)
    if model is None:
        raise CodecError("a learned-codec payload needs the model it was encoded with")
    return ae_decode(payload, model)
