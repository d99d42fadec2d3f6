import numpy as np
import pytest
import torch

from rasc.codecs import CodecId, EncodedPayload, decode, encode
from rasc.codecs.ae import (
    AeConfig, AeModel, ae_decode, ae_encode, checkpoint_bytes, checkpoint_from_bytes, decode_latents, lambda_tag,
    latents_from_payload, load_checkpoint, save_checkpoint,
)
from rasc.datamodel import GridConfig, Image8
from rasc.errors import CodecError, FormatError
from rasc.lidar import normalize_grid, pointcloud_to_grid


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return AeModel(AeConfig(hidden=8, latent=4, lam=0.01)).eval()


def test_shapes(model):
    x = torch.rand(2, 3, 32, 48)
    y = model.encode(x)
    assert y.shape == (2, 4, 4, 6)
    assert model(x).shape == x.shape


def test_roundtrip_matches_direct_decode(model, frame):
    payload = ae_encode(frame, model)
    assert payload.codec == CodecId.LEARNED_AE
    assert payload.tag == lambda_tag(0.01) == 3
    back = EncodedPayload.from_bytes(payload.to_bytes())
    out = ae_decode(back, model)
    with torch.no_grad():
        y = model.encode(torch.from_numpy(frame.data.transpose(2, 0, 1) / 255.0).float()[None])[0].double()
    yq = torch.sign(y) * torch.floor(y.abs() + 0.5)
    ref = decode_latents(yq.numpy(), model)
    assert np.array_equal(out.data, np.floor(ref * 255 + 0.5).astype(np.uint8))


def test_zero_latents_decode_to_bias_image(model):
    yq = np.zeros((4, 2, 2), np.int64)
    x = decode_latents(yq, model)
    with torch.no_grad():
        ref = model.decode(torch.zeros(1, 4, 2, 2))[0].clamp(0, 1).numpy().transpose(1, 2, 0)
    assert np.array_equal(x, ref)
    # with zero input every output pixel in a phase class sees the same biases
    assert x.shape == (16, 16, 3)


def test_grid_payload(model, scan):
    ng = normalize_grid(pointcloud_to_grid(scan, GridConfig()))
    payload = ae_encode(ng, model)
    out = decode(payload.to_bytes(), model)
    assert payload.is_grid
    assert np.array_equal(out.occupancy, ng.occupancy)
    assert not out.values[~out.occupancy].any()
    assert payload.bpp == 8 * payload.byte_length / (512 * 64)


def test_wrong_model_rejected(model, frame):
    payload = ae_encode(frame, model)
    torch.manual_seed(1)
    other = AeModel(AeConfig(hidden=8, latent=4)).eval()
    with pytest.raises(CodecError, match="different model"):
        ae_decode(payload, other)
    with pytest.raises(CodecError, match="latent channels"):
        ae_decode(payload, AeModel(AeConfig(hidden=8, latent=5)))
    with pytest.raises(CodecError):
        decode(payload)


def test_size_must_fit_stride(model):
    with pytest.raises(CodecError):
        ae_encode(Image8(np.zeros((20, 16, 3), np.uint8)), model)


def test_checkpoint_roundtrip(tmp_path, model, frame):
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    assert checkpoint_bytes(loaded) == path.read_bytes()
    assert loaded.fingerprint() == model.fingerprint()
    assert encode(frame, CodecId.LEARNED_AE, model=loaded).to_bytes() == ae_encode(frame, model).to_bytes()


def test_corrupt_checkpoints(model):
    blob = checkpoint_bytes(model)
    for bad in (b"NOPE" + blob[4:], blob[:-4], blob + b"\0", blob[:12]):
        with pytest.raises(FormatError):
            checkpoint_from_bytes(bad)


def test_latent_offsets_recovered(model, frame):
    payload = ae_encode(frame, model)
    yq, _ = latents_from_payload(payload, model)
    assert yq.shape == (4, 8, 8)
    assert yq.dtype == np.int64


def test_lambda_tags():
    assert [lambda_tag(v) for v in (0.001, 0.0025, 0.01, 0.05, 0.1)] == [1, 2, 3, 4, 5]
    assert lambda_tag(0.3) == 0
