"""Integrator behavior: equilibrium, ballistics, pinning, determinism."""
import numpy as np
import pytest

from fabfold.sim import (ClothParams, WorkspaceConfig, ClothState, init_flat,
                         step, settle, build_springs, EPS_GROUND)


def test_flat_cloth_is_at_equilibrium(params, ws, flat_state):
    st = flat_state
    for _ in range(100):
        st = step(st, params, 0.01)
    assert np.abs(st.positions - flat_state.positions).max() < 1e-3


def test_free_fall_matches_closed_form(ws):
    p = ClothParams(grid_n=2, rest_len=0.22, stiffness_structural=0.0,
                    stiffness_shear=0.0, stiffness_bend=0.0, damping=1.0)
    st = init_flat(p, ws, (0.2, 0.2), 0.0)
    st.positions[:, 2] = 0.1
    dt, t = 1e-3, 0.08
    for _ in range(int(round(t / dt))):
        st = step(st, p, dt)
    drop_sim = 0.1 - st.positions[0, 2]
    drop_true = 0.5 * p.gravity * t * t
    assert drop_sim == pytest.approx(drop_true, rel=0.05)


def test_free_fall_clamps_at_ground(ws):
    p = ClothParams(grid_n=2, rest_len=0.22, stiffness_structural=0.0,
                    stiffness_shear=0.0, stiffness_bend=0.0, damping=1.0)
    st = init_flat(p, ws, (0.2, 0.2), 0.0)
    st.positions[:, 2] = 0.05
    for _ in range(1000):
        st = step(st, p, 1e-2)
    assert np.all(st.positions[:, 2] >= -EPS_GROUND)
    assert np.allclose(st.positions[:, 2], p.cloth_thickness / 2)


def test_grasped_particle_pinned(params, ws, flat_state):
    st = flat_state.copy()
    st.grasped = np.array([0])
    st.gripper_pos = st.positions[0].copy()
    st.grasp_offsets = np.zeros((1, 3))
    start = st.positions[0].copy()
    for _ in range(50):
        st = step(st, params, 0.01)
    assert np.abs(st.positions[0] - start).max() == 0.0


def test_step_requires_positive_dt(params, flat_state):
    with pytest.raises(ValueError):
        step(flat_state, params, 0.0)


def test_step_deterministic(params, ws, flat_state):
    a = flat_state.copy()
    b = flat_state.copy()
    a.velocities[:, 0] = 0.01
    b.velocities[:, 0] = 0.01
    for _ in range(20):
        a = step(a, params, 0.01)
        b = step(b, params, 0.01)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)


def test_settle_reaches_low_energy(params, ws, flat_state):
    st = flat_state.copy()
    st.velocities[:] = np.random.default_rng(0).normal(0, 0.05, st.velocities.shape)
    st = settle(st, params)
    assert st.kinetic_energy(params.particle_mass) < params.settle_ke_threshold
    assert np.all(st.positions[:, 2] >= -EPS_GROUND)


def test_spring_topology_counts(params):
    structural, shear, bend = build_springs(params)
    n = params.grid_n
    assert len(structural.i) == 2 * n * (n - 1)
    assert len(shear.i) == 2 * (n - 1) * (n - 1)
    assert len(bend.i) == 2 * n * (n - 2)
    assert np.allclose(structural.rest, params.rest_len)
    assert np.allclose(shear.rest, params.rest_len * np.sqrt(2))
    assert np.allclose(bend.rest, 2 * params.rest_len)
