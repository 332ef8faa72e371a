"""Rendering invariants and the PGM/PBM codecs."""
import numpy as np
import pytest

from fabfold.sim import ClothParams, WorkspaceConfig, init_flat, render
from fabfold.imageio import (write_pgm16, read_pgm16, write_pbm, read_pbm,
                             ImageFormatError)


def test_flat_coverage_matches_analytic(flat_obs, params, ws):
    analytic = (params.side_len / ws.side_m * ws.image_px) ** 2
    assert flat_obs.mask.sum() == pytest.approx(analytic, rel=0.05)


def test_mask_depth_consistency(flat_obs):
    assert np.all((flat_obs.depth > 0) <= (flat_obs.mask == 1))
    assert np.all(flat_obs.depth[flat_obs.mask == 0] == 0)
    assert flat_obs.depth.min() >= 0.0
    assert flat_obs.depth.max() <= 1.0


def test_flat_depth_value(flat_obs, params):
    # single layer: top surface at one thickness, normalized by 10 thicknesses
    vals = np.unique(flat_obs.depth[flat_obs.mask > 0])
    assert vals == pytest.approx([0.1])


def test_render_is_pure(params, ws, flat_state):
    a = render(flat_state, ws, params)
    b = render(flat_state, ws, params)
    assert np.array_equal(a.mask, b.mask)
    assert np.array_equal(a.depth, b.depth)


def test_rotated_cloth_same_coverage(params, ws):
    a = render(init_flat(params, ws, (0.2, 0.2), 0.0), ws, params)
    b = render(init_flat(params, ws, (0.2, 0.2), np.pi / 7), ws, params)
    assert b.mask.sum() == pytest.approx(a.mask.sum(), rel=0.05)


def test_pgm16_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, (64, 64)).astype(np.float32)
    path = tmp_path / "img.pgm"
    write_pgm16(img, path)
    back = read_pgm16(path)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 1.0 / 65535 + 1e-7


def test_pbm_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    mask = (rng.random((64, 64)) < 0.3).astype(np.uint8)
    path = tmp_path / "mask.pbm"
    write_pbm(mask, path)
    assert np.array_equal(read_pbm(path), mask)


def test_pbm_non_multiple_of_8_width(tmp_path):
    mask = np.zeros((5, 13), dtype=np.uint8)
    mask[2, 11] = 1
    path = tmp_path / "m.pbm"
    write_pbm(mask, path)
    assert np.array_equal(read_pbm(path), mask)


def test_truncated_images_rejected(tmp_path):
    img = np.zeros((16, 16))
    p1 = tmp_path / "a.pgm"
    write_pgm16(img, p1)
    p1.write_bytes(p1.read_bytes()[:-10])
    with pytest.raises(ImageFormatError):
        read_pgm16(p1)
    p2 = tmp_path / "a.pbm"
    write_pbm(img, p2)
    p2.write_bytes(p2.read_bytes()[:-4])
    with pytest.raises(ImageFormatError):
        read_pbm(p2)
