"""Gaussian heatmap encoding."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fabfold.heatmap import HeatmapConfig, encode_gaussian

CFG = HeatmapConfig(sigma_px=2.0, image_px=64)


def test_peak_is_exactly_one():
    h = encode_gaussian((20, 30), CFG)
    assert h[30, 20] == 1.0
    assert h.max() == 1.0


def test_value_at_one_sigma():
    h = encode_gaussian((32, 32), CFG)
    assert h[32, 34] == pytest.approx(np.exp(-0.5), abs=1e-7)
    assert h[30, 32] == pytest.approx(np.exp(-0.5), abs=1e-7)


def test_not_normalized():
    h = encode_gaussian((32, 32), CFG)
    assert h.sum() == pytest.approx(2 * np.pi * CFG.sigma_px ** 2, rel=0.01)


def test_out_of_bounds_center_rejected():
    with pytest.raises(ValueError):
        encode_gaussian((64, 10), CFG)
    with pytest.raises(ValueError):
        encode_gaussian((-1, 10), CFG)


def test_sigma_validation():
    with pytest.raises(ValueError):
        HeatmapConfig(sigma_px=0.0)


@settings(max_examples=60, deadline=None)
@given(u=st.integers(0, 63), v=st.integers(0, 63))
def test_argmax_round_trip(u, v):
    h = encode_gaussian((u, v), CFG)
    idx = int(h.argmax())
    assert (idx % 64, idx // 64) == (u, v)
