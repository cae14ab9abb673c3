# apps/postprocess/tests.py
import numpy as np
import pandas as pd
import pytest

from apps.common.exceptions import ProbabilityMapError
from apps.networks.config import RcnnNetConfig, UNetConfig
from apps.networks.rcnn import build_rcnn_net
from apps.networks.unet import build_unet
from apps.postprocess.extraction import (
    ExtractionParams, connected_components, extract_centroids, extract_centroids_with_scores, otsu_threshold,
)
from apps.postprocess.services.prediction_service import PredictionService
from apps.proposals.services.detector_service import DetectorParams
from apps.synthdata.ground_truth import GroundTruth
from apps.synthdata.services.dataset_service import Sample

FIXED = ExtractionParams(threshold_mode='fixed', fixed_threshold=0.5, min_component_area=1)


def brute_force_otsu(p):
    p = p.ravel()
    best, best_t = -1.0, 0.5
    for k in range(1, 256):
        t = k / 256
        low, high = p[p < t], p[p >= t]
        if len(low) and len(high):
            value = (len(low) / p.size) * (len(high) / p.size) * (low.mean() - high.mean()) ** 2
        else:
            value = 0.0
        if value > best:
            best, best_t = value, t
    return best_t


def blob_map(centres, size=32, radius=1):
    p = np.zeros((size, size))
    for cx, cy in centres:
        p[cy - radius:cy + radius + 1, cx - radius:cx + radius + 1] = 1.0
    return p


class TestOtsu:
    def test_bimodal(self):
        p = np.where(np.arange(64).reshape(8, 8) % 3 == 0, 0.9, 0.1)
        assert 0.1 < otsu_threshold(p) < 0.9

    def test_constant_fallback(self):
        assert otsu_threshold(np.full((5, 5), 0.3)) == 0.5

    @pytest.mark.parametrize('seed', range(10))
    def test_matches_exhaustive_scan(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.beta(0.5, 2.0, size=(16, 16))
        assert otsu_threshold(p) == pytest.approx(brute_force_otsu(p), abs=1e-12)


class TestConnectedComponents:
    def test_two_blocks(self):
        binary = np.zeros((8, 8), dtype=bool)
        binary[1:3, 1:3] = True
        binary[5:7, 4:6] = True
        components = connected_components(binary)
        assert len(components) == 2
        assert components[0].centroid == pytest.approx((1.5, 1.5))
        assert components[1].centroid == pytest.approx((4.5, 5.5))
        assert [c.area for c in components] == [4, 4]

    def test_empty(self):
        assert connected_components(np.zeros((4, 4), dtype=bool)) == []

    def test_diagonal_neighbours_merge(self):
        binary = np.eye(4, dtype=bool)
        assert len(connected_components(binary)) == 1

    def test_weighted_centroid(self):
        p = np.zeros((3, 3))
        p[1, 0], p[1, 1] = 0.9, 0.3
        component = connected_components(p > 0, p)[0]
        assert component.centroid == pytest.approx((0.25, 1.0))


class TestExtractCentroids:
    def test_three_blobs(self):
        centres = [(5, 5), (20, 8), (12, 25)]
        points = extract_centroids(blob_map(centres), FIXED)
        assert len(points) == 3
        for expected in centres:
            assert np.min(np.hypot(*(points - expected).T)) <= 0.5

    def test_all_zero(self):
        assert extract_centroids(np.zeros((16, 16)), ExtractionParams()).shape == (0, 2)

    def test_rejects_invalid_map(self):
        with pytest.raises(ProbabilityMapError):
            extract_centroids(np.full((4, 4), 2.0), FIXED)

    def test_min_area_drops_specks(self):
        p = blob_map([(5, 5)])
        p[20, 20] = 1.0
        params = ExtractionParams(threshold_mode='fixed', min_component_area=2)
        assert len(extract_centroids(p, params)) == 1

    def test_split_merged_blobs(self):
        p = np.zeros((16, 16))
        p[5:8, 5:11] = 1.0
        merged = extract_centroids(p, FIXED)
        assert len(merged) == 1
        params = FIXED.model_copy(update={'reconcile_with_count': True})
        points = extract_centroids(p, params, c_hat=2.2)
        assert len(points) == 2
        assert np.hypot(*(points.mean(axis=0) - merged[0])) <= 1.0
        assert sorted(points[:, 0]) == pytest.approx([6.0, 9.0])

    def test_reconcile_keeps_heaviest(self):
        p = blob_map([(5, 5), (20, 20)])
        p[19:22, 19:22] = 0.6
        params = FIXED.model_copy(update={'reconcile_with_count': True})
        points, scores = extract_centroids_with_scores(p, params, c_hat=1.0)
        np.testing.assert_allclose(points, [[5.0, 5.0]])
        assert scores[0] == 1.0

    def test_without_reconcile_count_is_ignored(self):
        p = blob_map([(5, 5), (20, 20)])
        assert len(extract_centroids(p, FIXED, c_hat=7.0)) == 2

    @pytest.mark.parametrize('seed', range(5))
    def test_centroids_inside_components_and_threshold_monotone(self, seed):
        p = np.random.default_rng(seed).uniform(size=(24, 24)) ** 3
        previous_area = np.inf
        for tau in (0.2, 0.4, 0.6, 0.8):
            area = (p >= tau).sum()
            assert area <= previous_area
            previous_area = area
            params = ExtractionParams(threshold_mode='fixed', fixed_threshold=tau, min_component_area=1)
            components = connected_components(p >= tau, p)
            points = extract_centroids(p, params)
            assert len(points) == len(components)
            for (x, y), component in zip(points, components):
                x0, y0, x1, y1 = component.bounding_box
                assert x0 <= x <= x1 and y0 <= y <= y1


class TestPredictionService:
    def samples(self, size):
        rng = np.random.default_rng(0)
        return [Sample(f'img_{i:06d}.png', rng.uniform(size=(size, size, 3)), GroundTruth.empty()) for i in range(3)]

    def test_unet_points(self, tmp_path):
        service = PredictionService(build_unet(UNetConfig(input_size=32)), ExtractionParams())
        predictions = service.predict(self.samples(32))
        assert [p.filename for p in predictions] == ['img_000000.png', 'img_000001.png', 'img_000002.png']
        assert all(p.boxes is None and p.c_hat >= 0 for p in predictions)
        path = service.write_pred_points(predictions, tmp_path / 'pred_points.csv')
        assert list(pd.read_csv(path).columns) == ['filename', 'x', 'y', 'score']

    def test_classifier_boxes(self, tmp_path):
        model = build_rcnn_net(RcnnNetConfig())
        service = PredictionService(model, detector=DetectorParams(score_threshold=0.01), threads=2)
        predictions = service.predict(self.samples(64))
        for prediction in predictions:
            np.testing.assert_allclose(prediction.points, prediction.boxes[:, :2] + prediction.boxes[:, 2:] / 2)
        path = service.write_detections(predictions, tmp_path / 'detections.csv')
        assert list(pd.read_csv(path).columns) == ['filename', 'x', 'y', 'w', 'h', 'score']
