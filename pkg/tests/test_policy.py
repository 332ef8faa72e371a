"""Action selection, the two-heatmap baseline, and the grasp-mode heuristic."""
import numpy as np
import pytest

from fabfold.policy import (PolicyKind, PolicyModel, PolicyError, make_policy,
                            predict_place, select_action, baseline_select,
                            choose_grasp_mode, nearest_mask_pixel,
                            mask_candidates)
from fabfold.sim.actions import PickPlaceAction, GraspMode
from fabfold.sim.camera import Observation
from fabfold.heatmap import HeatmapConfig, encode_gaussian


def square_obs(lo=20, hi=44):
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[lo:hi, lo:hi] = 1
    return Observation(depth=mask.astype(np.float32) * 0.1, mask=mask)


@pytest.fixture(scope="module")
def p2p():
    return make_policy(PolicyKind.PICK_TO_PLACE, seed=0)


@pytest.fixture(scope="module")
def ppp():
    return make_policy(PolicyKind.PICK_PLUS_PLACE, seed=0)


class TestPredictPlace:
    def test_zero_weight_model_uniform_half(self):
        model = make_policy(PolicyKind.PICK_TO_PLACE, seed=0)
        model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
        probs = predict_place(model, square_obs(), (30, 30))
        assert np.all(probs == 0.5)

    def test_off_mask_pick_rejected(self, p2p):
        with pytest.raises(PolicyError):
            predict_place(p2p, square_obs(), (1, 1))

    def test_kind_mismatch_rejected(self, ppp):
        with pytest.raises(PolicyError):
            predict_place(ppp, square_obs(), (30, 30))


class TestSelectAction:
    def test_single_pixel_mask_forces_pick(self, p2p):
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[33, 21] = 1
        obs = Observation(depth=mask.astype(np.float32) * 0.1, mask=mask)
        act = select_action(p2p, obs, stride=1)
        assert act.pick_px == (21, 33)

    def test_stub_tie_breaking(self):
        model = make_policy(PolicyKind.PICK_TO_PLACE, seed=0)
        mask = np.zeros((64, 64), dtype=np.uint8)
        picks = [(10, 10), (20, 10), (10, 20), (20, 20)]
        for u, v in picks:
            mask[v, u] = 1
        obs = Observation(depth=mask.astype(np.float32) * 0.1, mask=mask)
        maxima = {(10, 10): 0.2, (20, 10): 0.9, (10, 20): 0.9, (20, 20): 0.1}

        def stub(obs_, pick):
            m = np.zeros((64, 64), dtype=np.float32)
            m[50, 50] = maxima[pick]
            return m

        act = select_action(model, obs, stride=1, predictor=stub)
        # row-major candidate order: (10,10), (20,10), (10,20), (20,20);
        # first of the two 0.9 maxima wins
        assert act.pick_px == (20, 10)
        assert act.place_px == (50, 50)
        assert act.score == pytest.approx(0.9)
        # brute-force cross-check
        best = max(picks, key=lambda p: (maxima[p], -(p[1] * 64 + p[0])))
        assert maxima[act.pick_px] == maxima[best]

    def test_place_tie_row_major(self):
        model = make_policy(PolicyKind.PICK_TO_PLACE, seed=0)
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[10, 10] = 1
        obs = Observation(depth=mask.astype(np.float32), mask=mask)

        def stub(obs_, pick):
            m = np.zeros((64, 64), dtype=np.float32)
            m[5, 40] = 0.7
            m[40, 5] = 0.7
            return m

        act = select_action(model, obs, stride=1, predictor=stub)
        assert act.place_px == (40, 5)   # row 5 before row 40

    def test_stride_candidate_count(self):
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[8:12, 8:12] = 1   # 4x4 block aligned to even pixels
        assert len(mask_candidates(mask, 1)) == 16
        assert len(mask_candidates(mask, 2)) == 4

    def test_stride1_score_dominates_stride2(self, p2p):
        obs = square_obs(24, 40)
        a1 = select_action(p2p, obs, stride=1)
        a2 = select_action(p2p, obs, stride=2)
        assert a1.score >= a2.score - 1e-9

    def test_empty_mask_rejected(self, p2p):
        obs = Observation(depth=np.zeros((64, 64), np.float32),
                          mask=np.zeros((64, 64), np.uint8))
        with pytest.raises(PolicyError):
            select_action(p2p, obs)


class TestBaselineSelect:
    def test_pick_projected_to_mask(self, ppp):
        obs = square_obs()
        act = baseline_select(ppp, obs)
        u, v = act.pick_px
        assert obs.mask[v, u] == 1

    def test_nearest_mask_pixel_rule(self):
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[5:8, 5:8] = 1
        assert nearest_mask_pixel(mask, (0, 0)) == (5, 5)
        # ties break row-major: (6,5) row 5 beats (5,6) row 6 at equal distance
        mask = np.zeros((64, 64), dtype=np.uint8)
        mask[5, 6] = 1
        mask[6, 5] = 1
        assert nearest_mask_pixel(mask, (0, 0)) == (6, 5)

    def test_place_unconstrained_by_mask(self):
        # the architectural failure mode: place argmax reads channel 1
        # directly, never projected onto the mask
        model = make_policy(PolicyKind.PICK_PLUS_PLACE, seed=3)
        obs = square_obs()
        act = baseline_select(model, obs)
        assert 0 <= act.place_px[0] < 64 and 0 <= act.place_px[1] < 64

    def test_kind_mismatch_rejected(self, p2p):
        with pytest.raises(PolicyError):
            baseline_select(p2p, square_obs())


class TestGraspMode:
    def test_edge_pick_all_layer(self):
        obs = square_obs()
        act = PickPlaceAction(pick_px=(20, 30), place_px=(60, 60))  # on left edge
        assert choose_grasp_mode(obs, act) is GraspMode.ALL_LAYER

    def test_interior_pick_place_off_mask_top_layer(self):
        obs = square_obs()
        act = PickPlaceAction(pick_px=(32, 32), place_px=(60, 60))
        assert choose_grasp_mode(obs, act) is GraspMode.TOP_LAYER

    def test_interior_pick_place_on_mask_all_layer(self):
        obs = square_obs()
        act = PickPlaceAction(pick_px=(32, 32), place_px=(25, 25))
        assert choose_grasp_mode(obs, act) is GraspMode.ALL_LAYER

    def test_off_mask_pick_rejected(self):
        obs = square_obs()
        act = PickPlaceAction(pick_px=(1, 1), place_px=(25, 25))
        with pytest.raises(PolicyError):
            choose_grasp_mode(obs, act)


def test_policy_channel_contract_enforced():
    from fabfold.net import FcnArchitecture, init_params
    arch = FcnArchitecture.standard(1, 1)
    with pytest.raises(PolicyError):
        PolicyModel(kind=PolicyKind.PICK_TO_PLACE, arch=arch,
                    params=init_params(arch, 0))


def test_select_action_deterministic(p2p):
    obs = square_obs(26, 38)
    a = select_action(p2p, obs, stride=2)
    b = select_action(p2p, obs, stride=2)
    assert a.pick_px == b.pick_px and a.place_px == b.place_px
