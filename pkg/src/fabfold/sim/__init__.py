from .params import (ClothParams, WorkspaceConfig, SimError, FootprintError,
                     DivergenceError, EmptyGraspError)
from .state import ClothState, save_snapshot, load_snapshot, SnapshotError, EPS_GROUND
from .camera import Observation, render, pixel_to_world, world_to_pixel
from .engine import init_flat, step, settle, build_springs
from .actions import (PickPlaceAction, GraspMode, PickOffMaskError,
                      execute_pick_place, crumple,
                      LIFT_HEIGHT, DROP_HEIGHT, ACTION_DT)

__all__ = [
    "ClothParams", "WorkspaceConfig", "ClothState", "Observation",
    "PickPlaceAction", "GraspMode",
    "SimError", "FootprintError", "DivergenceError", "EmptyGraspError",
    "PickOffMaskError", "SnapshotError", "EPS_GROUND",
    "init_flat", "step", "settle", "render", "execute_pick_place", "crumple",
    "pixel_to_world", "world_to_pixel", "save_snapshot", "load_snapshot",
    "build_springs", "LIFT_HEIGHT", "DROP_HEIGHT", "ACTION_DT",
]
