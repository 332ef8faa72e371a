"""Orthographic top-down rendering and pixel/world coordinate transforms.

Pixel convention: pixel (u, v) covers the square [u*pitch, (u+1)*pitch) x
[v*pitch, (v+1)*pitch) in world XY; its center is at ((u+.5)*pitch, (v+.5)*pitch).
Images are indexed [v, u] (row = v = world y, col = u = world x).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ClothParams, WorkspaceConfig
from .state import ClothState


@dataclass
class Observation:
    """Masked depth image of the cloth: background exactly 0, heights in [0,1]."""

    depth: np.ndarray  # (image_px, image_px) float32, normalized cloth top height
    mask: np.ndarray   # (image_px, image_px) uint8 in {0, 1}

    def __post_init__(self):
        if self.depth.shape != self.mask.shape:
            raise ValueError("depth and mask shapes differ")


def pixel_to_world(p, ws: WorkspaceConfig) -> np.ndarray:
    """Map pixel coords (u, v) to the world XY of the pixel center."""
    p = np.asarray(p, dtype=np.float64)
    return (p + 0.5) * ws.pitch


def world_to_pixel(q, ws: WorkspaceConfig):
    """Map a world XY point to the nearest pixel (u, v).

    Points outside the workspace are clamped; returns (pixel, in_bounds).
    """
    q = np.asarray(q, dtype=np.float64)
    in_bounds = bool(np.all(q >= 0.0) and np.all(q <= ws.side_m))
    p = np.floor(q / ws.pitch).astype(np.int64)
    p = np.clip(p, 0, ws.image_px - 1)
    return p, in_bounds


def _grid_triangles(grid_n: int) -> np.ndarray:
    """Vertex index triples for the two triangles of every grid quad."""
    idx = np.arange(grid_n * grid_n).reshape(grid_n, grid_n)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([d, c, b], 1)])


_TRI_CACHE: dict[int, np.ndarray] = {}


def render(state: ClothState, ws: WorkspaceConfig, params: ClothParams) -> Observation:
    """Rasterize the cloth surface into a masked depth image.

    A pixel is covered when its center lies inside the XY projection of any
    surface triangle; depth there is the max interpolated surface-top height
    (particle z + thickness/2) over covering triangles, normalized by
    10 * cloth_thickness and clamped to [0, 1].
    """
    n = params.grid_n
    if n not in _TRI_CACHE:
        _TRI_CACHE[n] = _grid_triangles(n)
    tris = _TRI_CACHE[n]

    px = ws.image_px
    pitch = ws.pitch
    depth = np.zeros((px, px), dtype=np.float64)
    covered = np.zeros((px, px), dtype=bool)

    pos = state.positions
    p0 = pos[tris[:, 0]]
    p1 = pos[tris[:, 1]]
    p2 = pos[tris[:, 2]]
    # 2D barycentric setup per triangle
    d00 = p1[:, :2] - p0[:, :2]
    d01 = p2[:, :2] - p0[:, :2]
    denom = d00[:, 0] * d01[:, 1] - d00[:, 1] * d01[:, 0]
    ok = np.abs(denom) > 1e-18

    # pixel index ranges per triangle bounding box
    xy = np.stack([p0[:, :2], p1[:, :2], p2[:, :2]], axis=0)
    lo = np.floor(xy.min(axis=0) / pitch - 0.5).astype(np.int64)
    hi = np.ceil(xy.max(axis=0) / pitch - 0.5).astype(np.int64)
    np.clip(lo, 0, px - 1, out=lo)
    np.clip(hi, 0, px - 1, out=hi)

    top = params.cloth_thickness / 2.0
    for t in np.nonzero(ok)[0]:
        u0, v0 = lo[t]
        u1, v1 = hi[t]
        if u1 < u0 or v1 < v0:
            continue
        cu = (np.arange(u0, u1 + 1) + 0.5) * pitch - p0[t, 0]
        cv = (np.arange(v0, v1 + 1) + 0.5) * pitch - p0[t, 1]
        gu, gv = np.meshgrid(cu, cv)
        inv = 1.0 / denom[t]
        w1 = (gu * d01[t, 1] - gv * d01[t, 0]) * inv
        w2 = (gv * d00[t, 0] - gu * d00[t, 1]) * inv
        inside = (w1 >= 0) & (w2 >= 0) & (w1 + w2 <= 1)
        if not inside.any():
            continue
        z = p0[t, 2] + w1 * (p1[t, 2] - p0[t, 2]) + w2 * (p2[t, 2] - p0[t, 2]) + top
        sub_d = depth[v0:v1 + 1, u0:u1 + 1]
        sub_c = covered[v0:v1 + 1, u0:u1 + 1]
        np.maximum(sub_d, np.where(inside, z, -np.inf), out=sub_d)
        sub_c |= inside

    depth[~covered] = 0.0
    norm = 10.0 * params.cloth_thickness
    depth_img = np.clip(depth / norm, 0.0, 1.0)
    depth_img[~covered] = 0.0
    return Observation(depth=depth_img.astype(np.float32),
                       mask=covered.astype(np.uint8))
