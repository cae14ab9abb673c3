# apps/proposals/tests.py
import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from pydantic import ValidationError

from apps.common.exceptions import BoxError, ConfigurationError
from apps.networks.config import RcnnNetConfig
from apps.networks.rcnn import build_rcnn_net
from apps.proposals.geometry import box_center, clip_boxes, iou, iou_matrix, nms
from apps.proposals.patches import extract_patch
from apps.proposals.sampling import (
    IGNORE, NEGATIVE, POSITIVE, generate_train_proposals, label_for_iou, label_proposals, sliding_proposals,
)
from apps.proposals.services.detector_service import DetectorParams, detect_boxes

coordinate = st.floats(min_value=-10, max_value=60, allow_nan=False)
extent = st.floats(min_value=0.5, max_value=30, allow_nan=False)
boxes_strategy = st.tuples(coordinate, coordinate, extent, extent)


def reference_nms(boxes, scores, threshold):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(iou(boxes[i], boxes[k]) <= threshold for k in kept):
            kept.append(i)
    return kept


class TestIou:
    def test_identical(self):
        assert iou((1, 2, 5, 7), (1, 2, 5, 7)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 4, 4), (10, 10, 4, 4)) == 0.0

    def test_half_shift(self):
        assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_zero_area_rejected(self):
        with pytest.raises(BoxError):
            iou((0, 0, 0, 4), (0, 0, 4, 4))

    @hypothesis_settings(max_examples=200)
    @given(boxes_strategy, boxes_strategy)
    def test_symmetry_and_bounds(self, a, b):
        forward, backward = iou(a, b), iou(b, a)
        assert forward == pytest.approx(backward, abs=1e-12)
        assert 0.0 <= forward <= 1.0
        assert iou(a, a) == pytest.approx(1.0)

    def test_matrix_shape(self):
        assert iou_matrix(np.zeros((0, 4)), [(0, 0, 1, 1)]).shape == (0, 1)


class TestLabels:
    @pytest.mark.parametrize('overlap,label', [
        (1.0, POSITIVE), (0.5, POSITIVE), (0.49, IGNORE), (0.3, IGNORE),
        (0.2, NEGATIVE), (0.1, NEGATIVE), (0.09, IGNORE), (0.0, IGNORE),
    ])
    def test_windows(self, overlap, label):
        assert label_for_iou(overlap) == label

    def test_exhaustive(self):
        labels = {label_for_iou(v) for v in np.linspace(0, 1, 1001)}
        assert labels == {POSITIVE, NEGATIVE, IGNORE}

    def test_label_proposals_picks_best_gt(self):
        gt = [(0, 0, 10, 10), (20, 0, 10, 10)]
        labeled = label_proposals([(20, 0, 10, 10), (5, 0, 10, 10), (60, 60, 4, 4)], gt)
        assert [p.label for p in labeled] == [POSITIVE, IGNORE, IGNORE]
        assert [p.matched_gt for p in labeled] == [1, 0, None]
        assert labeled[1].iou == pytest.approx(1 / 3)
        assert labeled[2].iou == 0.0

    def test_label_proposals_without_gt(self):
        labeled = label_proposals([(0, 0, 4, 4)], np.zeros((0, 4)))
        assert (labeled[0].label, labeled[0].matched_gt) == (IGNORE, None)


class TestTrainProposals:
    gt = np.array([[10.0, 12.0, 8.0, 4.0], [40.0, 30.0, 6.0, 6.0]])

    def test_exact_count_and_gt_first(self):
        proposals = generate_train_proposals(self.gt, 64, seed=1)
        assert len(proposals) == 1000
        assert proposals[0].iou == 1.0 and proposals[0].label == POSITIVE
        assert proposals[1].matched_gt == 1

    def test_labels_follow_windows(self):
        for proposal in generate_train_proposals(self.gt, 64, n=300, seed=2):
            assert proposal.label == label_for_iou(proposal.iou)
            assert proposal.box.w > 0 and proposal.box.h > 0
            assert proposal.box.x >= -0.5 and proposal.box.x + proposal.box.w <= 63.5 + 1e-9

    def test_populates_both_windows(self):
        labels = [p.label for p in generate_train_proposals(self.gt, 64, seed=3)]
        assert labels.count(POSITIVE) >= 2
        assert labels.count(NEGATIVE) >= 1

    def test_deterministic(self):
        first = generate_train_proposals(self.gt, 64, n=50, seed=9)
        second = generate_train_proposals(self.gt, 64, n=50, seed=9)
        assert first == second

    def test_empty_gt(self):
        proposals = generate_train_proposals(np.zeros((0, 4)), 64, n=40, seed=0)
        assert len(proposals) == 40
        assert all(p.label in (NEGATIVE, IGNORE) and p.matched_gt is None for p in proposals)

    def test_invalid_count(self):
        with pytest.raises(ConfigurationError):
            generate_train_proposals(self.gt, 64, n=0)


class TestSlidingProposals:
    def test_grid_count(self):
        assert len(sliding_proposals(64, [16], 16)) == 16

    @pytest.mark.parametrize('scale', [5, 16, 33])
    def test_unit_stride(self, scale):
        assert len(sliding_proposals(40, [scale], 1)) == (40 - scale + 1) ** 2

    def test_within_bounds_and_ordered(self):
        boxes = sliding_proposals(64, [8, 12], 4)
        assert np.all(boxes[:, :2] >= -0.5)
        assert np.all(boxes[:, :2] + boxes[:, 2:] <= 63.5)
        np.testing.assert_array_equal(boxes[0], [-0.5, -0.5, 8, 8])
        np.testing.assert_array_equal(boxes[1], [3.5, -0.5, 8, 8])
        np.testing.assert_array_equal(clip_boxes(boxes, 64), boxes)

    def test_bad_stride(self):
        with pytest.raises(ConfigurationError):
            sliding_proposals(64, [8], 0)


class TestExtractPatch:
    def test_identity(self):
        image = np.random.default_rng(0).uniform(size=(16, 16, 3))
        patch = extract_patch(image, (-0.5, -0.5, 16, 16), 16)
        np.testing.assert_allclose(patch, np.transpose(image, (2, 0, 1)), atol=1e-6)

    def test_constant(self):
        patch = extract_patch(np.full((20, 20, 3), 0.3), (2.0, 3.0, 7.0, 5.0), 9)
        np.testing.assert_allclose(patch, 0.3, atol=1e-12)

    def test_bilinear_ramp(self):
        rows, cols = np.mgrid[0:32, 0:32]
        image = np.repeat((2.0 * cols + 3.0 * rows)[..., None], 3, axis=2)
        box = (4.0, 6.0, 10.0, 8.0)
        patch = extract_patch(image, box, 5)
        xs = 4.0 + (np.arange(5) + 0.5) * 10.0 / 5
        ys = 6.0 + (np.arange(5) + 0.5) * 8.0 / 5
        expected = 2.0 * xs[None, :] + 3.0 * ys[:, None]
        np.testing.assert_allclose(patch[1], expected, atol=1e-9)

    def test_zero_area(self):
        with pytest.raises(BoxError):
            extract_patch(np.zeros((8, 8, 3)), (1, 1, 0, 3), 4)

    def test_no_overlap(self):
        with pytest.raises(BoxError):
            extract_patch(np.zeros((8, 8, 3)), (20, 20, 3, 3), 4)


class TestNms:
    def test_single_box(self):
        assert nms([(0, 0, 4, 4)], [0.7], 0.5) == [0]

    def test_identical_boxes(self):
        assert nms([(0, 0, 4, 4), (0, 0, 4, 4)], [0.9, 0.8], 0.5) == [0]

    def test_ties_prefer_lower_index(self):
        assert nms([(0, 0, 4, 4), (0, 0, 4, 4)], [0.8, 0.8], 0.5) == [0]

    @pytest.mark.parametrize('seed', range(5))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        boxes = np.column_stack([rng.uniform(0, 40, (50, 2)), rng.uniform(3, 15, (50, 2))])
        scores = rng.uniform(size=50)
        assert nms(boxes, scores, 0.3) == reference_nms(boxes, scores, 0.3)

    @hypothesis_settings(max_examples=50, deadline=None)
    @given(st.lists(boxes_strategy, min_size=1, max_size=20), st.floats(min_value=0.05, max_value=0.95))
    def test_kept_boxes_form_antichain(self, boxes, threshold):
        scores = np.linspace(1, 0, len(boxes))
        kept = nms(boxes, scores, threshold)
        for i in kept:
            for j in kept:
                if i != j:
                    assert iou(boxes[i], boxes[j]) <= threshold


class TestDetector:
    def test_params_validation(self):
        assert DetectorParams(scales='8,12').scales == [8, 12]
        with pytest.raises(ValidationError):
            DetectorParams(score_threshold=1.5)

    def test_detect_boxes(self):
        model = build_rcnn_net(RcnnNetConfig(), seed=0)
        image = np.random.default_rng(1).uniform(size=(64, 64, 3))
        params = DetectorParams(score_threshold=0.05)
        detections = detect_boxes(model, image, params)
        assert detections.boxes.shape[1] == 4
        assert len(detections.boxes) == len(detections.scores)
        assert np.all(detections.scores >= 0.05)
        assert list(detections.scores) == sorted(detections.scores, reverse=True)
        if len(detections.boxes) > 1:
            overlaps = iou_matrix(detections.boxes, detections.boxes)
            assert np.all(overlaps[~np.eye(len(overlaps), dtype=bool)] <= 0.3)

    def test_box_center(self):
        np.testing.assert_allclose(box_center([(1, 2, 4, 6)]), [[3, 5]])
