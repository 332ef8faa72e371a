"""Simulation parameter sets and their validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class SimError(Exception):
    """Base class for simulator failures."""


class FootprintError(SimError):
    """Cloth placement does not fit inside the workspace."""


class DivergenceError(SimError):
    """Integration produced a non-finite coordinate."""

    def __init__(self, particle: int, what: str = "position"):
        self.particle = particle
        super().__init__(f"simulation diverged: non-finite {what} at particle {particle}")


class EmptyGraspError(SimError):
    """No particle within grasp radius of the pick point."""


@dataclass
class ClothParams:
    """Mass-spring cloth with constraint-projection dynamics.

    Cloth side length is fixed at 0.22 m, so rest_len follows from grid_n.
    Stiffness values are applied per projection iteration and compound over
    the solver loop; they are kept low so the fabric stretches transiently
    under gripper tension (knit-like) instead of dragging its anchored part.
    """

    grid_n: int = 25
    rest_len: float = field(default=0.22 / 24)
    stiffness_structural: float = 0.08
    stiffness_shear: float = 0.072
    stiffness_bend: float = 0.04
    damping: float = 0.97
    particle_mass: float = 1e-4
    gravity: float = 9.81
    ground_friction: float = 0.10
    substeps: int = 2
    settle_ke_threshold: float = 1e-6
    settle_max_steps: int = 2000
    cloth_thickness: float = 0.002

    def __post_init__(self):
        if self.grid_n < 2:
            raise ValueError(f"grid_n must be >= 2, got {self.grid_n}")
        if not self.rest_len > 0:
            raise ValueError(f"rest_len must be > 0, got {self.rest_len}")
        if not (0 < self.damping <= 1):
            raise ValueError(f"damping must be in (0,1], got {self.damping}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        for name in ("rest_len", "stiffness_structural", "stiffness_shear",
                     "stiffness_bend", "damping", "particle_mass", "gravity",
                     "ground_friction", "settle_ke_threshold", "cloth_thickness"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    @property
    def side_len(self) -> float:
        """Edge length of the particle grid in meters."""
        return self.rest_len * (self.grid_n - 1)

    @classmethod
    def with_grid(cls, grid_n: int, **kw) -> "ClothParams":
        """Params for a 0.22 m cloth discretized at grid_n particles per side."""
        kw.setdefault("rest_len", 0.22 / (grid_n - 1))
        return cls(grid_n=grid_n, **kw)


@dataclass
class WorkspaceConfig:
    """Square tabletop workspace viewed by an orthographic top-down camera."""

    side_m: float = 0.40
    image_px: int = 64

    def __post_init__(self):
        if not self.side_m > 0:
            raise ValueError(f"side_m must be > 0, got {self.side_m}")
        if self.image_px < 8:
            raise ValueError(f"image_px must be >= 8, got {self.image_px}")

    @property
    def pitch(self) -> float:
        """Meters per pixel."""
        return self.side_m / self.image_px
