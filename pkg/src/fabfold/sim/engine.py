"""Constraint-projection cloth dynamics.

Particles carry the cloth mid-surface; the resting plane is z = thickness/2
so the fabric underside touches the table at z = 0. Layering of folded
fabric is approximated by a vertical separation constraint between
grid-distant particles that overlap in XY; those contacts are inelastic.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .params import ClothParams, WorkspaceConfig, FootprintError, DivergenceError
from .state import ClothState

PROJECTION_ITERS = 6
LAYER_RADIUS_FACTOR = 1.0   # XY radius (in rest lengths) for layer stacking pairs
LAYER_MIN_GRID_DIST = 3     # grid Chebyshev distance below which pairs are ignored
LAYER_STIFFNESS = 0.4
LAYER_FRICTION = 0.8       # tangential retention for cloth-on-cloth contacts
PAIR_REFRESH_SUBSTEPS = 4   # substeps between layer-pair neighbor queries


class _SpringSet:
    """Index pairs and rest lengths for one stiffness group."""

    def __init__(self, i, j, rest):
        self.i = np.asarray(i, dtype=np.int64)
        self.j = np.asarray(j, dtype=np.int64)
        self.rest = np.asarray(rest, dtype=np.float64)


def build_springs(params: ClothParams):
    """Structural, shear, and bend spring sets for the particle grid."""
    n = params.grid_n
    L = params.rest_len
    idx = np.arange(n * n).reshape(n, n)

    struct_i = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    struct_j = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    structural = _SpringSet(struct_i, struct_j, np.full(struct_i.shape, L))

    shear_i = np.concatenate([idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()])
    shear_j = np.concatenate([idx[1:, 1:].ravel(), idx[1:, :-1].ravel()])
    shear = _SpringSet(shear_i, shear_j, np.full(shear_i.shape, L * np.sqrt(2)))

    bend_i = np.concatenate([idx[:, :-2].ravel(), idx[:-2, :].ravel()])
    bend_j = np.concatenate([idx[:, 2:].ravel(), idx[2:, :].ravel()])
    bend = _SpringSet(bend_i, bend_j, np.full(bend_i.shape, 2 * L))

    return structural, shear, bend


class _Solver:
    """Merged constraint arrays for one (grid_n, rest_len, stiffness) config."""

    def __init__(self, params: ClothParams):
        structural, shear, bend = build_springs(params)
        self.i = np.concatenate([structural.i, shear.i, bend.i])
        self.j = np.concatenate([structural.j, shear.j, bend.j])
        self.rest = np.concatenate([structural.rest, shear.rest, bend.rest])
        self.k = np.concatenate([
            np.full(len(structural.i), params.stiffness_structural),
            np.full(len(shear.i), params.stiffness_shear),
            np.full(len(bend.i), params.stiffness_bend),
        ])
        self.scatter = np.concatenate([self.i, self.j])
        n = params.grid_n
        gi, gj = np.divmod(np.arange(n * n), n)
        self.grid_xy = np.stack([gi, gj], axis=1)
        self.n_particles = n * n


_SOLVER_CACHE: dict[tuple, _Solver] = {}


def _solver_for(params: ClothParams) -> _Solver:
    key = (params.grid_n, params.rest_len, params.stiffness_structural,
           params.stiffness_shear, params.stiffness_bend)
    if key not in _SOLVER_CACHE:
        _SOLVER_CACHE[key] = _Solver(params)
    return _SOLVER_CACHE[key]


def init_flat(params: ClothParams, ws: WorkspaceConfig, center, angle: float) -> ClothState:
    """Flat cloth grid at rest height, rotated by angle about center.

    Raises FootprintError when any particle would leave the workspace.
    """
    n = params.grid_n
    half = params.side_len / 2.0
    lin = np.linspace(-half, half, n)
    gy, gx = np.meshgrid(lin, lin, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    c, s = np.cos(angle), np.sin(angle)
    rot = pts @ np.array([[c, s], [-s, c]])
    xy = rot + np.asarray(center, dtype=np.float64)
    if xy.min() < 0.0 or xy.max() > ws.side_m:
        raise FootprintError(
            f"cloth footprint (center={tuple(center)}, side={params.side_len:.3f} m, "
            f"angle={angle:.3f} rad) exceeds workspace [0, {ws.side_m}]^2")
    pos = np.zeros((n * n, 3))
    pos[:, :2] = xy
    pos[:, 2] = params.cloth_thickness / 2.0
    return ClothState(positions=pos, velocities=np.zeros_like(pos))


def _scatter_add(acc: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    n = acc.shape[0]
    for dim in range(acc.shape[1]):
        acc[:, dim] += np.bincount(idx, weights=vals[:, dim], minlength=n)


def _project_springs(pos, inv_mass, sol: _Solver):
    d = pos[sol.j] - pos[sol.i]
    dist = np.sqrt(np.einsum("ij,ij->i", d, d))
    np.maximum(dist, 1e-12, out=dist)
    wi = inv_mass[sol.i]
    wj = inv_mass[sol.j]
    wsum = wi + wj
    safe = np.where(wsum > 0, wsum, 1.0)
    scale = sol.k * (dist - sol.rest) / (dist * safe)
    scale[wsum == 0] = 0.0
    corr = d * scale[:, None]
    vals = np.concatenate([corr * wi[:, None], -corr * wj[:, None]])
    _scatter_add(pos, sol.scatter, vals)


def _layer_pairs(pos, sol: _Solver, radius: float):
    """Non-neighbor particle pairs currently overlapping in XY."""
    tree = cKDTree(pos[:, :2])
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return pairs
    ga = sol.grid_xy[pairs[:, 0]]
    gb = sol.grid_xy[pairs[:, 1]]
    return pairs[np.abs(ga - gb).max(axis=1) >= LAYER_MIN_GRID_DIST]


def _project_layers(pos, inv_mass, pairs, thickness, contact):
    """Keep layer pairs a thickness apart in z; mark members as contacts."""
    if len(pairs) == 0:
        return
    a, b = pairs[:, 0], pairs[:, 1]
    dz = pos[b, 2] - pos[a, 2]
    viol = np.abs(dz) < thickness
    if not viol.any():
        return
    a, b, dz = a[viol], b[viol], dz[viol]
    upper = np.where(dz >= 0, b, a)
    lower = np.where(dz >= 0, a, b)
    gap = thickness - np.abs(dz)
    wu = inv_mass[upper]
    wl = inv_mass[lower]
    wsum = wu + wl
    ok = wsum > 0
    corr = LAYER_STIFFNESS * gap / np.where(ok, wsum, 1.0)
    corr[~ok] = 0.0
    n = pos.shape[0]
    pos[:, 2] += np.bincount(upper, weights=corr * wu, minlength=n)
    pos[:, 2] -= np.bincount(lower, weights=corr * wl, minlength=n)
    contact[upper] = True
    contact[lower] = True


def step(state: ClothState, params: ClothParams, dt: float) -> ClothState:
    """Advance the cloth by dt (semi-implicit integration + projection).

    Returns a new ClothState; the input is not modified. Grasped particles
    are pinned to gripper_pos + grasp_offsets throughout.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    sol = _solver_for(params)
    n_part = state.n_particles
    use_layers = n_part == sol.n_particles

    pos = state.positions.copy()
    vel = state.velocities.copy()
    inv_mass = np.full(n_part, 1.0 / params.particle_mass)
    pinned = None
    if state.grasped is not None and len(state.grasped) > 0:
        pinned = state.grasped
        inv_mass[pinned] = 0.0
        pin_target = state.gripper_pos + state.grasp_offsets

    rest_z = params.cloth_thickness / 2.0
    layer_radius = LAYER_RADIUS_FACTOR * params.rest_len

    vel *= params.damping
    h = dt / params.substeps
    pairs = None
    for sub in range(params.substeps):
        vel[:, 2] -= params.gravity * h
        if pinned is not None:
            vel[pinned] = 0.0
        prev = pos.copy()
        pos += vel * h
        if pinned is not None:
            pos[pinned] = pin_target
        layer_contact = np.zeros(n_part, dtype=bool)
        for _ in range(PROJECTION_ITERS):
            _project_springs(pos, inv_mass, sol)
        if use_layers:
            if pairs is None or sub % PAIR_REFRESH_SUBSTEPS == 0:
                pairs = _layer_pairs(pos, sol, layer_radius)
            _project_layers(pos, inv_mass, pairs, params.cloth_thickness, layer_contact)
        if pinned is not None:
            pos[pinned] = pin_target
        # ground contact: clamp mid-surface to rest height; contact state is
        # judged on the pre-step configuration so a constraint yank cannot
        # lift a particle out of its own friction within the same substep
        on_ground = prev[:, 2] < rest_z + 0.25 * params.cloth_thickness
        pos[pos[:, 2] < rest_z, 2] = rest_z
        if pinned is not None:
            on_ground[pinned] = False
            layer_contact[pinned] = False
        layer_contact &= ~on_ground
        # position-level friction: contacts retain only a fraction of their
        # tangential displacement, so constraint pulls cannot drag the cloth;
        # cloth-on-cloth contact is slipperier than the table surface
        pos[on_ground, :2] = (prev[on_ground, :2]
                              + params.ground_friction * (pos[on_ground, :2] - prev[on_ground, :2]))
        pos[layer_contact, :2] = (prev[layer_contact, :2]
                                  + LAYER_FRICTION * (pos[layer_contact, :2] - prev[layer_contact, :2]))
        vel = (pos - prev) / h
        # stacked-layer contact is inelastic: kill the separation-constraint
        # bounce so piles come to rest instead of oscillating forever
        vel[layer_contact, 2] = 0.0
        if pinned is not None:
            vel[pinned] = 0.0

    if not np.all(np.isfinite(pos)):
        bad = int(np.argwhere(~np.isfinite(pos))[0, 0])
        raise DivergenceError(bad)

    return ClothState(
        positions=pos,
        velocities=vel,
        grasped=None if pinned is None else state.grasped.copy(),
        gripper_pos=None if pinned is None else state.gripper_pos.copy(),
        grasp_offsets=None if pinned is None else state.grasp_offsets.copy(),
    )


def settle(state: ClothState, params: ClothParams, dt: float = 0.01) -> ClothState:
    """Step until total kinetic energy drops below the threshold or the cap."""
    for _ in range(params.settle_max_steps):
        state = step(state, params, dt)
        if state.kinetic_energy(params.particle_mass) < params.settle_ke_threshold:
            break
    return state
