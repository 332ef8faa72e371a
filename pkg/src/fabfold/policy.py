"""Pick-conditioned place policy and the unconditioned two-heatmap baseline.

PICK_TO_PLACE: input [depth, pick-Gaussian], output one place heatmap;
action selection scans candidate picks on the cloth mask and keeps the
pick whose best place probability is highest.

PICK_PLUS_PLACE: input [depth], output a pick heatmap and a place heatmap;
the argmaxes are read off independently (the place is NOT conditioned on
the pick, which is exactly the failure mode the comparison probes).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .heatmap import HeatmapConfig, encode_gaussian
from .net import FcnArchitecture, forward, sigmoid
from .sim.actions import PickPlaceAction, GraspMode

EDGE_THRESH_PX = 3          # ALL_LAYER when the pick is this close to the mask edge
SELECT_BATCH = 64           # candidate picks per forward batch


class PolicyError(Exception):
    pass


class PolicyKind(enum.Enum):
    PICK_TO_PLACE = "pick-to-place"
    PICK_PLUS_PLACE = "pick-plus-place"


@dataclass
class PolicyModel:
    kind: PolicyKind
    arch: FcnArchitecture
    params: dict
    heatmap_cfg: HeatmapConfig = field(default_factory=HeatmapConfig)

    def __post_init__(self):
        expect_in = 2 if self.kind is PolicyKind.PICK_TO_PLACE else 1
        expect_out = 1 if self.kind is PolicyKind.PICK_TO_PLACE else 2
        if self.arch.in_channels != expect_in or self.arch.out_channels != expect_out:
            raise PolicyError(
                f"{self.kind.value} needs {expect_in}->{expect_out} channels, "
                f"arch has {self.arch.in_channels}->{self.arch.out_channels}")


def make_policy(kind: PolicyKind, seed: int = 0,
                heatmap_cfg: HeatmapConfig | None = None) -> PolicyModel:
    cfg = heatmap_cfg or HeatmapConfig()
    if kind is PolicyKind.PICK_TO_PLACE:
        arch = FcnArchitecture.standard(2, 1)
    else:
        arch = FcnArchitecture.standard(1, 2)
    from .net import init_params
    return PolicyModel(kind=kind, arch=arch, params=init_params(arch, seed=seed),
                       heatmap_cfg=cfg)


def predict_place(model: PolicyModel, obs, pick_px) -> np.ndarray:
    """Place probability map for one candidate pick (must lie on the mask)."""
    if model.kind is not PolicyKind.PICK_TO_PLACE:
        raise PolicyError("predict_place needs a PICK_TO_PLACE model")
    u, v = int(pick_px[0]), int(pick_px[1])
    if obs.mask[v, u] == 0:
        raise PolicyError(f"pick {tuple(pick_px)} is off the cloth mask")
    x = np.stack([obs.depth.astype(np.float32),
                  encode_gaussian((u, v), model.heatmap_cfg)], axis=-1)[None]
    logits = forward(model.arch, model.params, x)
    return sigmoid(logits[0, :, :, 0])


def _predict_place_batch(model: PolicyModel, depth, picks) -> np.ndarray:
    """Stacked place maps for many candidate picks of one observation,
    batched through the network."""
    n = len(picks)
    maps = np.empty((n, depth.shape[0], depth.shape[1]), dtype=np.float32)
    depth32 = depth.astype(np.float32)
    for lo in range(0, n, SELECT_BATCH):
        chunk = picks[lo:lo + SELECT_BATCH]
        x = np.empty((len(chunk), depth.shape[0], depth.shape[1], 2), dtype=np.float32)
        for i, (u, v) in enumerate(chunk):
            x[i, :, :, 0] = depth32
            x[i, :, :, 1] = encode_gaussian((u, v), model.heatmap_cfg)
        logits = forward(model.arch, model.params, x)
        maps[lo:lo + len(chunk)] = sigmoid(logits[:, :, :, 0])
    return maps


def mask_candidates(mask: np.ndarray, stride: int) -> list[tuple[int, int]]:
    """Mask pixels on the stride grid, in row-major (v, then u) order."""
    vs, us = np.nonzero(mask)
    keep = (vs % stride == 0) & (us % stride == 0)
    return [(int(u), int(v)) for v, u in zip(vs[keep], us[keep])]


def select_action(model: PolicyModel, obs, stride: int = 1,
                  predictor=None) -> PickPlaceAction:
    """Exhaustive pick search over the (strided) mask.

    The pick with the largest best-place probability wins; ties break to
    the lowest row-major pick, then the lowest row-major place pixel.
    `predictor` may stub the per-pick place maps in tests.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    cands = mask_candidates(obs.mask, stride)
    if not cands:
        raise PolicyError("empty cloth mask: no candidate picks")
    if predictor is None:
        maps = _predict_place_batch(model, obs.depth, cands)
    else:
        maps = np.stack([predictor(obs, c) for c in cands])
    n = maps.shape[0]
    flat = maps.reshape(n, -1)
    place_idx = flat.argmax(axis=1)       # first (row-major lowest) argmax per map
    scores = flat[np.arange(n), place_idx]
    best = int(np.argmax(scores))         # first occurrence = lowest row-major pick
    w = obs.mask.shape[1]
    pu, pv = int(place_idx[best] % w), int(place_idx[best] // w)
    return PickPlaceAction(pick_px=cands[best], place_px=(pu, pv),
                           score=float(scores[best]))


def nearest_mask_pixel(mask: np.ndarray, px) -> tuple[int, int]:
    """Closest mask pixel by Euclidean distance; ties break row-major."""
    vs, us = np.nonzero(mask)
    if len(vs) == 0:
        raise PolicyError("empty cloth mask")
    d = (us - px[0]) ** 2 + (vs - px[1]) ** 2
    i = int(np.argmin(d))   # nonzero() yields row-major order; argmin keeps first
    return (int(us[i]), int(vs[i]))


def baseline_select(model: PolicyModel, obs) -> PickPlaceAction:
    """Single forward pass: pick = argmax of channel 0 (projected onto the
    mask when off it), place = argmax of channel 1."""
    if model.kind is not PolicyKind.PICK_PLUS_PLACE:
        raise PolicyError("baseline_select needs a PICK_PLUS_PLACE model")
    if not obs.mask.any():
        raise PolicyError("empty cloth mask")
    x = obs.depth.astype(np.float32)[None, :, :, None]
    logits = forward(model.arch, model.params, x)
    probs = sigmoid(logits[0])
    w = obs.mask.shape[1]
    pick_flat = int(probs[:, :, 0].argmax())
    place_flat = int(probs[:, :, 1].argmax())
    pick = (pick_flat % w, pick_flat // w)
    place = (place_flat % w, place_flat // w)
    score = float(probs[:, :, 0].max() * probs[:, :, 1].max())
    if obs.mask[pick[1], pick[0]] == 0:
        pick = nearest_mask_pixel(obs.mask, pick)
    return PickPlaceAction(pick_px=pick, place_px=place, score=score)


def choose_grasp_mode(obs, action: PickPlaceAction,
                      edge_thresh_px: int = EDGE_THRESH_PX) -> GraspMode:
    """Wide grasp near the mask edge or when placing onto the cloth (folds);
    narrow top-layer pinch otherwise (smoothing)."""
    u, v = action.pick_px
    if obs.mask[v, u] == 0:
        raise PolicyError(f"pick {action.pick_px} is off the cloth mask")
    padded = np.pad(obs.mask, 1)           # off-image counts as off-mask
    dist = distance_transform_edt(padded)[1:-1, 1:-1]
    pu, pv = action.place_px
    on_mask_place = bool(obs.mask[pv, pu])
    if dist[v, u] <= edge_thresh_px or on_mask_place:
        return GraspMode.ALL_LAYER
    return GraspMode.TOP_LAYER
