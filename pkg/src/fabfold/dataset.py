"""Training samples: heatmap labels, negatives, augmentation, storage.

Dataset file layout (all little-endian): magic "FDST", version u16,
n_samples u32, image_px u16, flags u16, sigma_px f32; then per sample:
depth (image_px^2 float32), mask (bit-packed rows), pick u16 x2,
place u16 x2 (0xFFFF sentinel when unset), negative u8. Labels are not
stored: they are reconstructed from place and sigma on read.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .heatmap import HeatmapConfig, encode_gaussian
from .episodes import Episode

MAGIC = b"FDST"
VERSION = 1
UNSET = 0xFFFF
D_MIN_NEGATIVE = 8.0


class DatasetError(Exception):
    pass


@dataclass
class DemoSample:
    depth: np.ndarray             # (N, N) float32 in [0, 1]
    mask: np.ndarray              # (N, N) uint8 {0, 1}
    pick_px: tuple[int, int]
    place_px: Optional[tuple[int, int]]   # None for negatives
    label: np.ndarray             # (N, N) float32; zeros for negatives
    negative: bool = False

    def validate(self):
        n = self.depth.shape[0]
        u, v = self.pick_px
        if self.mask[v, u] == 0:
            raise DatasetError(f"pick {self.pick_px} off mask")
        if self.negative:
            if self.label.max() > 0:
                raise DatasetError("negative sample with nonzero label")
        else:
            pu, pv = self.place_px
            if self.label[pv, pu] != 1.0:
                raise DatasetError("positive label peak is not 1.0 at place")


@dataclass
class AugmentConfig:
    n_copies: int = 20
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    noise_sigma: float = 0.01
    depth_scale_lo: float = 0.8
    depth_scale_hi: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.scale_lo <= self.scale_hi < 2):
            raise ValueError("scale range must lie inside (0, 2)")
        if (self.depth_scale_lo, self.depth_scale_hi) != (0.8, 1.2):
            raise ValueError("depth_scale range is fixed at [0.8, 1.2]")


@dataclass
class SplitSpec:
    train_episodes: list
    val_episodes: list

    def __post_init__(self):
        overlap = set(self.train_episodes) & set(self.val_episodes)
        if overlap:
            raise ValueError(f"episodes in both splits: {sorted(overlap)}")


def snap_to_mask(px, mask) -> tuple[int, int]:
    vs, us = np.nonzero(mask)
    if len(vs) == 0:
        raise DatasetError("empty mask")
    d = (us - px[0]) ** 2 + (vs - px[1]) ** 2
    i = int(np.argmin(d))
    return (int(us[i]), int(vs[i]))


def build_samples(episode: Episode, cfg: HeatmapConfig):
    """One positive sample per episode step; returns (samples, warnings)."""
    samples = []
    warnings = []
    for i, step in enumerate(episode.steps):
        mask = step.obs_before.mask
        if not mask.any():
            warnings.append(f"step {i}: empty mask; skipped")
            continue
        pick = step.pick_px
        u, v = pick
        if mask[v, u] == 0:
            pick = snap_to_mask(pick, mask)
            warnings.append(f"step {i}: pick {step.pick_px} off mask, snapped to {pick}")
        samples.append(DemoSample(
            depth=step.obs_before.depth.astype(np.float32),
            mask=mask.astype(np.uint8),
            pick_px=pick,
            place_px=tuple(step.place_px),
            label=encode_gaussian(step.place_px, cfg),
            negative=False,
        ))
    return samples, warnings


def make_negative(sample: DemoSample, rng: np.random.Generator,
                  d_min: float = D_MIN_NEGATIVE) -> Optional[DemoSample]:
    """Negative twin: random on-mask pick far from the true one, zero label.

    Returns None (caller warns) when no mask pixel is d_min away.
    """
    if sample.negative:
        raise DatasetError("make_negative needs a positive sample")
    vs, us = np.nonzero(sample.mask)
    d = np.hypot(us - sample.pick_px[0], vs - sample.pick_px[1])
    ok = np.nonzero(d >= d_min)[0]
    if len(ok) == 0:
        return None
    i = int(rng.choice(ok))
    return DemoSample(
        depth=sample.depth,
        mask=sample.mask,
        pick_px=(int(us[i]), int(vs[i])),
        place_px=None,
        label=np.zeros_like(sample.label),
        negative=True,
    )


def _affine(angle: float, flip_h: bool, flip_v: bool, scale: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    flip = np.diag([-1.0 if flip_h else 1.0, -1.0 if flip_v else 1.0])
    return rot @ flip @ np.diag([scale, scale])


def _warp_images(depth, mask, M, center):
    """Inverse-map warp: bilinear depth, nearest-neighbor mask."""
    n = depth.shape[0]
    Minv = np.linalg.inv(M)
    v, u = np.mgrid[0:n, 0:n].astype(np.float64)
    du, dv = u - center, v - center
    su = Minv[0, 0] * du + Minv[0, 1] * dv + center
    sv = Minv[1, 0] * du + Minv[1, 1] * dv + center

    # nearest neighbor for the mask
    si = np.rint(sv).astype(int)
    sj = np.rint(su).astype(int)
    inside = (si >= 0) & (si < n) & (sj >= 0) & (sj < n)
    new_mask = np.zeros_like(mask)
    new_mask[inside] = mask[si[inside], sj[inside]]
    new_mask = (new_mask > 0.5).astype(np.uint8)

    # bilinear for depth, zero padding outside
    u0 = np.floor(su).astype(int)
    v0 = np.floor(sv).astype(int)
    fu = (su - u0).astype(np.float32)
    fv = (sv - v0).astype(np.float32)

    def tap(vv, uu):
        ok = (vv >= 0) & (vv < n) & (uu >= 0) & (uu < n)
        out = np.zeros(depth.shape, dtype=np.float32)
        out[ok] = depth[vv[ok], uu[ok]]
        return out

    new_depth = (tap(v0, u0) * (1 - fu) * (1 - fv)
                 + tap(v0, u0 + 1) * fu * (1 - fv)
                 + tap(v0 + 1, u0) * (1 - fu) * fv
                 + tap(v0 + 1, u0 + 1) * fu * fv)
    return new_depth, new_mask


def augment(sample: DemoSample, cfg: AugmentConfig, rng: np.random.Generator,
            heatmap_cfg: Optional[HeatmapConfig] = None) -> DemoSample:
    """One augmented copy: a shared geometric transform on images and
    coordinates, label re-encoded from the transformed place (never warped),
    depth scaling, and on-mask Gaussian noise.

    Draws whose pick or place leaves the image are redrawn (<= 10 tries);
    the original sample is returned if none lands inside.
    """
    n = sample.depth.shape[0]
    hm = heatmap_cfg or HeatmapConfig(image_px=n)
    center = (n - 1) / 2.0

    for _ in range(10):
        angle = rng.uniform(0.0, 2 * np.pi)
        flip_h = bool(rng.random() < 0.5)
        flip_v = bool(rng.random() < 0.5)
        scale = rng.uniform(cfg.scale_lo, cfg.scale_hi)
        depth_scale = rng.uniform(cfg.depth_scale_lo, cfg.depth_scale_hi)
        M = _affine(angle, flip_h, flip_v, scale)

        def fwd(p):
            q = M @ (np.asarray(p, dtype=np.float64) - center) + center
            return (int(np.rint(q[0])), int(np.rint(q[1])))

        new_pick = fwd(sample.pick_px)
        new_place = fwd(sample.place_px) if sample.place_px is not None else None
        pts = [new_pick] + ([new_place] if new_place is not None else [])
        if not all(0 <= p[0] < n and 0 <= p[1] < n for p in pts):
            continue
        new_depth, new_mask = _warp_images(sample.depth, sample.mask, M, center)
        if not new_mask.any():
            continue
        new_pick = snap_to_mask(new_pick, new_mask)

        new_depth = np.clip(new_depth * depth_scale, 0.0, 1.0)
        if cfg.noise_sigma > 0:
            noise = rng.normal(0.0, cfg.noise_sigma, size=new_depth.shape).astype(np.float32)
            new_depth = np.where(new_mask > 0, new_depth + noise, new_depth)
            new_depth = np.clip(new_depth, 0.0, 1.0)
        new_depth = new_depth.astype(np.float32)

        label = (encode_gaussian(new_place, hm) if not sample.negative
                 else np.zeros_like(sample.label))
        return DemoSample(depth=new_depth, mask=new_mask, pick_px=new_pick,
                          place_px=new_place, label=label, negative=sample.negative)
    return sample  # all draws left the image; caller may warn


def augment_dataset(samples, cfg: AugmentConfig,
                    heatmap_cfg: Optional[HeatmapConfig] = None):
    """n_copies augmented variants per sample, with per-(sample, copy) RNG
    streams so the expansion is order-independent and parallelizable."""
    out = []
    for si, s in enumerate(samples):
        for ci in range(cfg.n_copies):
            rng = np.random.default_rng([cfg.seed, si, ci])
            out.append(augment(s, cfg, rng, heatmap_cfg))
    return out


def add_negatives(samples, seed: int = 0, d_min: float = D_MIN_NEGATIVE):
    """Interleave one negative per positive; returns (samples, warnings)."""
    out = []
    warnings = []
    for si, s in enumerate(samples):
        out.append(s)
        if s.negative:
            continue
        neg = make_negative(s, np.random.default_rng([seed, 0x4E, si]), d_min)
        if neg is None:
            warnings.append(f"sample {si}: no mask pixel {d_min} px from pick; negative skipped")
        else:
            out.append(neg)
    return out, warnings


def write_dataset(samples, path, sigma_px: float = 2.0) -> None:
    if samples:
        image_px = samples[0].depth.shape[0]
    else:
        image_px = HeatmapConfig().image_px
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HIHHf", VERSION, len(samples), image_px, 0, sigma_px))
        for s in samples:
            if s.depth.shape != (image_px, image_px):
                raise DatasetError("mixed image sizes in one dataset")
            f.write(s.depth.astype("<f4").tobytes())
            f.write(np.packbits(s.mask.astype(np.uint8), axis=1).tobytes())
            place = s.place_px if s.place_px is not None else (UNSET, UNSET)
            f.write(struct.pack("<HHHHB", s.pick_px[0], s.pick_px[1],
                                place[0], place[1], int(s.negative)))


def read_dataset(path):
    """Inverse of write_dataset; labels reconstructed from place + sigma."""
    with open(path, "rb") as f:
        raw = f.read()
    header_len = 4 + struct.calcsize("<HIHHf")
    if len(raw) < header_len or raw[:4] != MAGIC:
        raise DatasetError(f"{path}: not a dataset file")
    version, n_samples, image_px, _flags, sigma_px = struct.unpack(
        "<HIHHf", raw[4:header_len])
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {version}")
    hm = HeatmapConfig(sigma_px=sigma_px, image_px=image_px)
    depth_bytes = image_px * image_px * 4
    mask_bytes = ((image_px + 7) // 8) * image_px
    rec = depth_bytes + mask_bytes + 9
    expect = header_len + rec * n_samples
    if len(raw) != expect:
        raise DatasetError(f"{path}: truncated dataset ({len(raw)} bytes, expected {expect})")
    samples = []
    off = header_len
    for _ in range(n_samples):
        depth = np.frombuffer(raw, dtype="<f4", count=image_px * image_px,
                              offset=off).reshape(image_px, image_px).copy()
        off += depth_bytes
        rows = np.frombuffer(raw, dtype=np.uint8, count=mask_bytes,
                             offset=off).reshape(image_px, (image_px + 7) // 8)
        mask = np.unpackbits(rows, axis=1)[:, :image_px].astype(np.uint8)
        off += mask_bytes
        pu, pv, qu, qv, neg = struct.unpack_from("<HHHHB", raw, off)
        off += 9
        negative = bool(neg)
        place = None if (qu, qv) == (UNSET, UNSET) else (qu, qv)
        label = (np.zeros((image_px, image_px), dtype=np.float32)
                 if negative or place is None else encode_gaussian(place, hm))
        samples.append(DemoSample(depth=depth, mask=mask, pick_px=(pu, pv),
                                  place_px=place, label=label, negative=negative))
    return samples, sigma_px
