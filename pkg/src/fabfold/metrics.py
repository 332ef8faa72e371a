"""Mask metrics: IOU, rigid-alignment IOU, and smoothing coverage (ISC).

iou_aligned searches rotations on a 2-degree grid about the mask centroid
with the fractional centroid-to-goal translation folded into the same
nearest-neighbor resample, then an exhaustive +-8 px integer translation.
The translation search runs as one FFT cross-correlation per rotation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_STEP_DEG = 2
TRANSLATION_RANGE = 8


@dataclass
class GoalSpec:
    goal_mask: np.ndarray     # (N, N) uint8, the folded target silhouette
    flat_coverage: int        # mask pixel count of the smooth cloth

    def __post_init__(self):
        if not self.goal_mask.any():
            raise ValueError("goal mask is empty")
        if not self.flat_coverage > int(self.goal_mask.sum()):
            raise ValueError("flat coverage must exceed the folded goal coverage")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """|a & b| / |a | b|; 0 when both masks are empty."""
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a > 0
    b = b > 0
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def isc(mask: np.ndarray, goal: GoalSpec) -> float:
    """Coverage as a fraction of the smooth-cloth coverage (not clamped)."""
    return float((mask > 0).sum() / goal.flat_coverage)


def _rotated_candidates(mask, goal_mask, angles_rad):
    """NN-resampled mask rotated about its centroid per angle, with the
    fractional centroid alignment onto the goal baked into the resample."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    cmu, cmv = xs.mean(), ys.mean()
    gy, gx = np.nonzero(goal_mask)
    cgu, cgv = gx.mean(), gy.mean()
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    du = (u - cgu)[None]
    dv = (v - cgv)[None]
    ca = np.cos(angles_rad)[:, None, None]
    sa = np.sin(angles_rad)[:, None, None]
    su = ca * du + sa * dv + cmu
    sv = -sa * du + ca * dv + cmv
    si = np.rint(sv).astype(np.int64)
    sj = np.rint(su).astype(np.int64)
    ok = (si >= 0) & (si < h) & (sj >= 0) & (sj < w)
    out = np.zeros((len(angles_rad), h, w), dtype=bool)
    m = mask > 0
    out[ok] = m[si[ok], sj[ok]]
    return out


def _shift_ious(cand, goal, goal_sum, tr):
    """IOU for every integer shift of cand within +-tr, via FFT correlation."""
    h, w = goal.shape
    size = (h + 2 * tr, w + 2 * tr)
    fa = np.fft.rfft2(cand.astype(np.float64), size)
    fg = np.fft.rfft2(goal.astype(np.float64), size)
    fo = np.fft.rfft2(np.ones_like(goal, dtype=np.float64), size)
    # corr[dv, du] = sum_xy cand[y, x] * goal[y + dv, x + du]
    inter_full = np.fft.irfft2(np.conj(fa) * fg, size)
    kept_full = np.fft.irfft2(np.conj(fa) * fo, size)
    dvs = np.arange(-tr, tr + 1)
    inter = inter_full[np.ix_(dvs, dvs)]
    kept = kept_full[np.ix_(dvs, dvs)]
    inter = np.rint(inter)
    kept = np.rint(kept)
    union = kept + goal_sum - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(union > 0, inter / union, 0.0)
    return vals


def iou_aligned(mask: np.ndarray, goal: GoalSpec,
                step_deg: int = ROTATION_STEP_DEG,
                tr: int = TRANSLATION_RANGE) -> float:
    """Max IOU over the rigid-transform search grid (identity included)."""
    if mask.shape != goal.goal_mask.shape:
        raise ValueError("mask and goal shapes differ")
    if not (mask > 0).any():
        return 0.0
    g = goal.goal_mask > 0
    best = iou(mask, g)
    angles = np.deg2rad(np.arange(0, 360, step_deg))
    cands = _rotated_candidates(mask, g, angles)
    gsum = float(g.sum())
    for cand in cands:
        if not cand.any():
            continue
        vals = _shift_ious(cand, g, gsum, tr)
        m = float(vals.max())
        if m > best:
            best = m
    return best
