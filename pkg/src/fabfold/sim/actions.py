"""Pick-and-place action primitive and random crumpling."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .params import ClothParams, WorkspaceConfig, EmptyGraspError, SimError
from .state import ClothState
from .camera import render, pixel_to_world, world_to_pixel
from .engine import step, settle

LIFT_HEIGHT = 0.10   # m, gripper height during the transfer
DROP_HEIGHT = 0.02   # m, gripper height at release
GRIPPER_SPEED = 0.5  # m/s
ACTION_DT = 0.01     # s, simulation step during scripted motion
GRASP_RADIUS_FACTOR = 1.5  # grasp radius in rest lengths


class PickOffMaskError(SimError):
    """Pick pixel does not lie on the rendered cloth mask."""


class GraspMode(enum.Enum):
    TOP_LAYER = "top"
    ALL_LAYER = "all"


@dataclass
class PickPlaceAction:
    """Pick/place pixel pair in observation coordinates.

    grasp_mode None means "not resolved yet": policies leave it for the
    grasp-mode heuristic; the simulator requires it to be set.
    """

    pick_px: tuple[int, int]     # (u, v)
    place_px: tuple[int, int]
    grasp_mode: Optional[GraspMode] = None
    score: float = 0.0


def _grasp_particles(state: ClothState, pick_world, params: ClothParams,
                     mode: GraspMode) -> np.ndarray:
    r = GRASP_RADIUS_FACTOR * params.rest_len
    d = np.linalg.norm(state.positions[:, :2] - pick_world, axis=1)
    near = np.nonzero(d <= r)[0]
    if len(near) == 0:
        raise EmptyGraspError(
            f"no particle within {r:.4f} m of pick point {tuple(pick_world)}")
    if mode is GraspMode.TOP_LAYER:
        top = near[np.argmax(state.positions[near, 2])]
        return np.array([top], dtype=np.int64)
    return near


def _move_gripper(state: ClothState, target, params: ClothParams) -> ClothState:
    """Step the sim while translating the gripper to target along a straight
    line with a cosine ease-in/out speed profile (limits flap swing)."""
    start = state.gripper_pos.copy()
    target = np.asarray(target, dtype=np.float64)
    dist = float(np.linalg.norm(target - start))
    n_steps = max(2, math.ceil(dist / (GRIPPER_SPEED * ACTION_DT)))
    for k in range(1, n_steps + 1):
        s = 0.5 - 0.5 * math.cos(math.pi * k / n_steps)
        state.gripper_pos = start + (target - start) * s
        state = step(state, params, ACTION_DT)
    return state


def execute_pick_place(state: ClothState, action: PickPlaceAction,
                       params: ClothParams, ws: WorkspaceConfig,
                       obs=None) -> ClothState:
    """Grasp at the pick pixel, transfer to the place pixel, release, settle.

    obs may pass a pre-rendered observation of state to skip re-rendering.
    Raises PickOffMaskError / EmptyGraspError without touching state.
    """
    if action.grasp_mode is None:
        raise ValueError("action.grasp_mode is not set")
    if obs is None:
        obs = render(state, ws, params)
    u, v = int(action.pick_px[0]), int(action.pick_px[1])
    if not (0 <= u < ws.image_px and 0 <= v < ws.image_px) or obs.mask[v, u] == 0:
        raise PickOffMaskError(f"pick pixel ({u},{v}) is off the cloth mask")

    pick_world = pixel_to_world((u, v), ws)
    place_world = pixel_to_world(action.place_px, ws)
    grasped = _grasp_particles(state, pick_world, params, action.grasp_mode)

    st = state.copy()
    z_top = float(st.positions[grasped, 2].max())
    gripper = np.array([pick_world[0], pick_world[1], z_top])
    st.grasped = grasped
    st.gripper_pos = gripper
    st.grasp_offsets = st.positions[grasped] - gripper

    st = _move_gripper(st, [pick_world[0], pick_world[1], LIFT_HEIGHT], params)
    st = _move_gripper(st, [place_world[0], place_world[1], LIFT_HEIGHT], params)
    st = _move_gripper(st, [place_world[0], place_world[1], DROP_HEIGHT], params)

    st.grasped = None
    st.gripper_pos = None
    st.grasp_offsets = None
    st = settle(st, params, ACTION_DT)
    return st


def crumple(state: ClothState, seed: int, k: int, params: ClothParams,
            ws: WorkspaceConfig) -> ClothState:
    """Apply k random top-layer pick-place actions; deterministic per seed."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    rng = np.random.default_rng(seed)
    st = state
    for _ in range(k):
        done = False
        for _ in range(20):
            obs = render(st, ws, params)
            vs, us = np.nonzero(obs.mask)
            pick_i = rng.integers(len(us))
            place = (int(rng.integers(ws.image_px)), int(rng.integers(ws.image_px)))
            action = PickPlaceAction(pick_px=(int(us[pick_i]), int(vs[pick_i])),
                                     place_px=place, grasp_mode=GraspMode.TOP_LAYER)
            try:
                st = execute_pick_place(st, action, params, ws, obs=obs)
                done = True
                break
            except EmptyGraspError:
                continue
        if not done:
            break
    return st
