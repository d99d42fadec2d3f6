import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rasc.codecs import KM_DEFAULT, RdLossConfig, dequantize, quantize, rd_loss_gan, rd_loss_vae


def test_quantize_ties_away_from_zero():
    assert quantize([0.5, -0.5, 1.5, -2.5, 0.49], 1.0).tolist() == [1, -1, 2, -3, 0]
    assert quantize([7.0], 2.0).tolist() == [4]
    assert dequantize([4, -1], 2.0).tolist() == [8.0, -2.0]
    with pytest.raises(ValueError):
        quantize([1.0], 0.0)


@given(st.floats(-1e6, 1e6), st.floats(0.01, 100))
def test_quantization_error_bounded(v, q):
    err = abs(dequantize(quantize([v], q), q)[0] - v)
    assert err <= q / 2 + 1e-9 * max(1.0, abs(v))


def test_loss_formulas():
    assert rd_loss_vae(0.02, 0.5, 0.01) == 0.02 + 0.01 * 0.5
    cfg = RdLossConfig(lam=0.1)
    assert cfg.k_m == 0.075 / 32 == KM_DEFAULT
    assert rd_loss_gan(10.0, 0.2, 0.5, cfg) == KM_DEFAULT * 10.0 + 1.0 * 0.2 + 0.1 * 0.5
    with pytest.raises(ValueError):
        rd_loss_vae(-1.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        RdLossConfig(lam=-0.1)


def test_loss_monotone_in_each_term():
    base = rd_loss_vae(0.01, 0.3, 0.05)
    assert rd_loss_vae(0.02, 0.3, 0.05) > base
    assert rd_loss_vae(0.01, 0.4, 0.05) > base
    assert np.isclose(rd_loss_vae(0.01, 0.3, 0.0), 0.01)
