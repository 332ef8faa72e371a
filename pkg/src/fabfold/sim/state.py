"""Cloth state container and binary snapshot format.

Snapshot layout: 16-byte header (magic "FSIM", version u16, grid_n u16,
8 reserved bytes) followed by grid_n^2 positions then grid_n^2 velocities
as little-endian float64 triples.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

SNAPSHOT_MAGIC = b"FSIM"
SNAPSHOT_VERSION = 1
EPS_GROUND = 1e-4


class SnapshotError(Exception):
    pass


@dataclass
class ClothState:
    """Particle positions/velocities plus the transient grasp attachment.

    positions/velocities are (grid_n^2, 3) float64 arrays, z up, meters.
    When grasped is nonempty, gripper_pos holds the gripper location and
    grasp_offsets the rigid offsets of each grasped particle from it.
    """

    positions: np.ndarray
    velocities: np.ndarray
    grasped: Optional[np.ndarray] = None
    gripper_pos: Optional[np.ndarray] = None
    grasp_offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities shapes differ")
        if (self.grasped is not None and len(self.grasped) > 0) != (self.gripper_pos is not None):
            raise ValueError("grasped set and gripper_pos must be present together")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "ClothState":
        return ClothState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            grasped=None if self.grasped is None else self.grasped.copy(),
            gripper_pos=None if self.gripper_pos is None else self.gripper_pos.copy(),
            grasp_offsets=None if self.grasp_offsets is None else self.grasp_offsets.copy(),
        )

    def validate(self, grid_n: int) -> None:
        n = grid_n * grid_n
        if self.positions.shape != (n, 3):
            raise ValueError(f"expected {n} particles, got {self.positions.shape}")
        if not np.all(np.isfinite(self.positions)):
            bad = int(np.argwhere(~np.isfinite(self.positions))[0, 0])
            raise ValueError(f"non-finite position at particle {bad}")
        if self.positions[:, 2].min() < -EPS_GROUND:
            raise ValueError("particle below ground plane")

    def kinetic_energy(self, particle_mass: float) -> float:
        return float(0.5 * particle_mass * np.sum(self.velocities ** 2))


def save_snapshot(state: ClothState, path) -> None:
    n = state.n_particles
    grid_n = int(round(n ** 0.5))
    if grid_n * grid_n != n:
        raise SnapshotError(f"particle count {n} is not a square grid")
    header = SNAPSHOT_MAGIC + struct.pack("<HH", SNAPSHOT_VERSION, grid_n) + b"\x00" * 8
    body = np.concatenate([state.positions.ravel(), state.velocities.ravel()])
    with open(path, "wb") as f:
        f.write(header)
        f.write(body.astype("<f8").tobytes())


def load_snapshot(path) -> ClothState:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError("not a cloth snapshot (bad magic)")
    version, grid_n = struct.unpack("<HH", raw[4:8])
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    n = grid_n * grid_n
    expect = 16 + n * 6 * 8
    if len(raw) != expect:
        raise SnapshotError(f"truncated snapshot: {len(raw)} bytes, expected {expect}")
    body = np.frombuffer(raw[16:], dtype="<f8")
    pos = body[: n * 3].reshape(n, 3).copy()
    vel = body[n * 3:].reshape(n, 3).copy()
    return ClothState(positions=pos, velocities=vel)
