"""IOU, aligned IOU, and coverage metrics."""
import numpy as np
import pytest
import scipy.ndimage as ndi
from hypothesis import given, settings, strategies as st

from fabfold.metrics import GoalSpec, iou, iou_aligned, isc


def triangle_mask():
    m = np.zeros((64, 64), dtype=np.uint8)
    for v in range(25):
        m[20 + v, 18:18 + 25 - v] = 1
    return m


@pytest.fixture(scope="module")
def goal():
    return GoalSpec(goal_mask=triangle_mask(), flat_coverage=1282)


class TestIou:
    def test_identical(self):
        m = triangle_mask()
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((8, 8), dtype=np.uint8)
        b = np.zeros((8, 8), dtype=np.uint8)
        a[0, 0] = 1
        b[7, 7] = 1
        assert iou(a, b) == 0.0

    def test_both_empty(self):
        z = np.zeros((8, 8), dtype=np.uint8)
        assert iou(z, z) == 0.0

    def test_counting_example(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = np.zeros((4, 4), dtype=np.uint8)
        a[0:2, 0:2] = 1            # 2x2
        b[0:2, 1:3] = 1            # shifted by 1: overlap 2, union 6
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            iou(np.zeros((4, 4)), np.zeros((5, 5)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.random((16, 16)) < 0.4)
        b = (rng.random((16, 16)) < 0.4)
        assert iou(a, b) == pytest.approx(iou(b, a))


class TestIouAligned:
    def test_exact_match(self, goal):
        assert iou_aligned(goal.goal_mask, goal) == 1.0

    def test_empty_mask(self, goal):
        assert iou_aligned(np.zeros_like(goal.goal_mask), goal) == 0.0

    def test_pure_translation_recovered(self, goal):
        pert = np.roll(goal.goal_mask, (4, -5), axis=(0, 1))
        assert iou_aligned(pert, goal) == 1.0

    def test_rotation_plus_shift_recovered(self, goal):
        pert = ndi.rotate(goal.goal_mask.astype(float), 90, reshape=False,
                          order=0) > 0.5
        pert = np.roll(pert, (5, 2), axis=(0, 1)).astype(np.uint8)
        assert iou_aligned(pert, goal) >= 0.95

    def test_dominates_plain_iou(self, goal):
        rng = np.random.default_rng(0)
        for _ in range(5):
            pert = np.roll(goal.goal_mask,
                           tuple(rng.integers(-6, 7, size=2)), axis=(0, 1))
            assert iou_aligned(pert, goal) >= iou(pert, goal.goal_mask) - 1e-12

    def test_shape_mismatch(self, goal):
        with pytest.raises(ValueError):
            iou_aligned(np.zeros((32, 32)), goal)


class TestIsc:
    def test_empty(self, goal):
        assert isc(np.zeros((64, 64)), goal) == 0.0

    def test_full_flat(self, goal):
        m = np.zeros((64, 64), dtype=np.uint8)
        m.ravel()[:1282] = 1
        assert isc(m, goal) == pytest.approx(1.0)

    def test_not_clamped(self, goal):
        m = np.ones((64, 64), dtype=np.uint8)
        assert isc(m, goal) > 1.0


def test_goalspec_validation():
    with pytest.raises(ValueError):
        GoalSpec(goal_mask=np.zeros((8, 8), dtype=np.uint8), flat_coverage=10)
    with pytest.raises(ValueError):
        GoalSpec(goal_mask=np.ones((8, 8), dtype=np.uint8), flat_coverage=10)
