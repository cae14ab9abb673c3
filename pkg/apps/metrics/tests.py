# apps/metrics/tests.py
import math
from itertools import permutations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from apps.common.exceptions import ConfigurationError, EvaluationError
from apps.metrics import timing
from apps.metrics.matching import MatchResult, match_points
from apps.metrics.scores import count_errors, f1_score, localization_rmse, precision_recall_f1
from apps.metrics.services.evaluation_service import (
    METRICS_COLUMNS, EvaluationService, compare_runs, evaluate_split, read_metrics, read_predicted_points, update_tpi,
    write_metrics,
)
from apps.metrics.timing import time_per_image
from apps.synthdata.ground_truth import GroundTruth

PUBLISHED_ROWS = [
    (0.9620, 0.9014, 0.9307),
    (0.8877, 0.8045, 0.8438),
    (0.9121, 0.8191, 0.8631),
    (0.8079, 0.8167, 0.8123),
    (0.7874, 0.8137, 0.8003),
]


def exhaustive_match(pred, gt, radius):
    """Best (count, -total distance) over every partial one-to-one assignment"""
    best = (0, 0.0)
    n, m = len(pred), len(gt)
    if n == 0 or m == 0:
        return best
    small, large = (pred, gt) if n <= m else (gt, pred)
    for chosen in permutations(range(len(large)), len(small)):
        count, total = 0, 0.0
        for i, j in enumerate(chosen):
            d = math.dist(small[i], large[j])
            if d <= radius:
                count += 1
                total += d
        if count > best[0] or (count == best[0] and total < best[1] - 1e-12):
            best = (count, total)
    return best


def gt_for(points):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return GroundTruth(points, np.column_stack([points - 2, np.full((len(points), 2), 4.0)]))


class TestMatchPoints:
    def test_single_pair(self):
        match = match_points([(5, 5)], [(5, 6)], 3)
        assert (match.tp, match.fp, match.fn) == (1, 0, 0)
        assert match.pairs == [(0, 0, 1.0)]

    def test_out_of_radius(self):
        match = match_points([(5, 5)], [(20, 20)], 3)
        assert (match.tp, match.fp, match.fn) == (0, 1, 1)

    def test_empty_sides(self):
        assert match_points([], [(1, 1)], 3).fn == 1
        assert match_points([(1, 1)], [], 3).fp == 1

    def test_radius_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            match_points([(1, 1)], [(1, 1)], 0)

    def test_prefers_more_matches_over_shorter_distance(self):
        # greedy nearest would pair pred 0 with gt 0 and leave gt 1 unmatched
        match = match_points([(2.0, 0.0), (5.0, 0.0)], [(1.0, 0.0), (3.5, 0.0)], 1.6)
        assert match.tp == 2

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(2024)
        for index in range(500):
            # every (pred, gt) size pair from 0..5 appears repeatedly
            pred = rng.uniform(0, 10, size=(index % 6, 2))
            gt = rng.uniform(0, 10, size=((index // 6) % 6, 2))
            match = match_points(pred, gt, 3.0)
            count, total = exhaustive_match([tuple(p) for p in pred], [tuple(g) for g in gt], 3.0)
            assert match.tp == count, index
            assert match.distances.sum() == pytest.approx(total, abs=1e-9), index
            assert match.tp + match.fp == len(pred) and match.tp + match.fn == len(gt)
            assert np.all(match.distances <= 3.0)

    @pytest.mark.parametrize('seed', range(5))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        pred, gt = rng.uniform(0, 20, size=(8, 2)), rng.uniform(0, 20, size=(7, 2))
        base = match_points(pred, gt, 4.0)
        shuffled = match_points(pred[rng.permutation(8)], gt[rng.permutation(7)], 4.0)
        assert shuffled.tp == base.tp
        assert shuffled.distances.sum() == pytest.approx(base.distances.sum(), abs=1e-9)


class TestScores:
    @pytest.mark.parametrize('precision,recall,expected', PUBLISHED_ROWS)
    def test_published_f1(self, precision, recall, expected):
        assert f1_score(precision, recall) == pytest.approx(expected, abs=5e-4)

    def test_direct_formula(self):
        scores = precision_recall_f1(MatchResult(tp=3, fp=1, fn=2))
        assert scores.precision == 0.75
        assert scores.recall == 0.6
        assert scores.f1 == pytest.approx(2 / 3)

    def test_zero_tp(self):
        scores = precision_recall_f1(MatchResult(tp=0, fp=4, fn=2))
        assert scores[:3] == (0.0, 0.0, 0.0)
        assert not scores.precision_undefined

    def test_empty_predictions_flagged(self):
        scores = precision_recall_f1(MatchResult(tp=0, fp=0, fn=5))
        assert scores.precision == 0.0 and scores.precision_undefined
        assert scores.recall == 0.0 and not scores.recall_undefined

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_bounds(self, tp, fp, fn):
        p, r, f1, _, _ = precision_recall_f1(MatchResult(tp, fp, fn))
        assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f1 <= 1.0
        assert f1 <= min(2 * p, 2 * r) + 1e-12

    def test_count_errors_example(self):
        stats = count_errors([3, 5], [4, 5])
        assert stats.me == -0.5
        assert stats.rmse == pytest.approx(math.sqrt(0.5))
        assert stats.mae == 0.5

    def test_count_errors_identity(self):
        stats = count_errors([1, 2, 0], [1, 2, 0])
        assert stats.as_dict() == {'me': 0.0, 'mse': 0.0, 'rmse': 0.0, 'mae': 0.0, 'mape': 0.0}

    def test_mape_zero_guard(self):
        assert count_errors([2], [0]).mape == 200.0

    @pytest.mark.parametrize('seed', range(5))
    def test_count_identities(self, seed):
        rng = np.random.default_rng(seed)
        stats = count_errors(rng.integers(0, 20, 40), rng.integers(0, 20, 40))
        assert stats.rmse == pytest.approx(math.sqrt(stats.mse), abs=1e-12)
        assert stats.mae >= abs(stats.me) - 1e-12
        assert min(stats.mse, stats.rmse, stats.mae, stats.mape) >= 0

    def test_count_length_mismatch(self):
        with pytest.raises(EvaluationError):
            count_errors([1, 2], [1])

    @pytest.mark.parametrize('distances,expected,empty', [
        ([1.0, 1.0], 1.0, False), ([], 0.0, True), ([3.0, 4.0], math.sqrt(12.5), False),
    ])
    def test_localization_rmse(self, distances, expected, empty):
        value, flagged = localization_rmse(distances)
        assert value == pytest.approx(expected)
        assert flagged is empty


class FakeClock:
    def __init__(self, ticks):
        self.ticks = iter(ticks)

    def perf_counter(self):
        return next(self.ticks)


class TestTiming:
    def test_median_of_reps_without_warmup(self, monkeypatch):
        monkeypatch.setattr(timing, 'time', FakeClock([0.0, 2.0, 10.0, 14.0]))
        calls = []
        tpi = time_per_image(lambda images: calls.append(len(images)), [1, 2], warmup=3, reps=2)
        assert len(calls) == 5
        assert tpi == pytest.approx((1.0 + 2.0) / 2)

    def test_empty_dataset(self):
        with pytest.raises(EvaluationError):
            time_per_image(lambda images: None, [], reps=1)

    def test_reps_positive(self):
        with pytest.raises(ConfigurationError):
            time_per_image(lambda images: None, [1], reps=0)


class TestEvaluationService:
    truths = {
        'img_000000.png': gt_for([(5, 5), (20, 20)]),
        'img_000001.png': gt_for([]),
        'img_000002.png': gt_for([(10, 30)]),
    }

    def test_perfect_predictions(self):
        predictions = {name: gt.centroids.copy() for name, gt in self.truths.items()}
        report = EvaluationService(radius=4).evaluate(predictions, self.truths, 'unet', 'test')
        assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)
        assert report.count_stats.mae == 0.0 and report.loc_rmse == 0.0

    def test_empty_predictions(self):
        report = EvaluationService(radius=4).evaluate({}, self.truths, 'unet', 'test')
        assert report.precision_undefined and report.recall == 0.0
        assert report.count_stats.me == -1.0

    def test_micro_average(self):
        predictions = {'img_000000.png': np.array([[5.0, 6.0], [40.0, 40.0]]), 'img_000001.png': np.array([[1.0, 1.0]])}
        report = EvaluationService(radius=4).evaluate(predictions, self.truths, 'network1', 'test')
        assert (report.tp, report.fp, report.fn) == (1, 2, 2)
        assert report.precision == pytest.approx(1 / 3) and report.recall == pytest.approx(1 / 3)

    def test_evaluate_split(self):
        predictions = {'img_000002.png': np.array([[11.0, 30.0]])}
        report = evaluate_split(predictions, self.truths, 4, 'unet', 'val')
        assert (report.tp, report.fp, report.fn, report.split) == (1, 0, 2, 'val')

    def test_unknown_filenames_listed(self):
        with pytest.raises(EvaluationError, match='img_000099.png'):
            EvaluationService(radius=4).evaluate({'img_000099.png': np.zeros((0, 2))}, self.truths, 'unet', 'test')

    def test_metrics_file(self, tmp_path):
        predictions = {name: gt.centroids.copy() for name, gt in self.truths.items()}
        service = EvaluationService(radius=4)
        path = tmp_path / 'metrics.csv'
        write_metrics([service.evaluate(predictions, self.truths, 'unet', 'test')], path)
        update_tpi(path, 'unet', 'test', 0.25)
        write_metrics([service.evaluate({}, self.truths, 'unet', 'test')], path)
        update_tpi(path, 'network2', 'test', 1.5)
        frame = read_metrics(path)
        assert list(frame.columns) == METRICS_COLUMNS
        assert frame['model'].tolist() == ['unet', 'network2']
        assert frame.loc[0, 'tpi_seconds'] == 0.25 and frame.loc[0, 'recall'] == 0.0
        assert math.isnan(frame.loc[1, 'f1'])

    def test_compare_runs(self, tmp_path):
        service = EvaluationService(radius=4)
        for name, predictions in [('a', {}), ('b', {k: g.centroids for k, g in self.truths.items()})]:
            (tmp_path / name).mkdir()
            write_metrics([service.evaluate(predictions, self.truths, name, 'test')], tmp_path / name / 'metrics.csv')
        combined = compare_runs([tmp_path / 'a' / 'metrics.csv', tmp_path / 'b' / 'metrics.csv'])
        assert combined['model'].tolist() == ['b', 'a']
        assert combined.columns[0] == 'run'

    def test_read_detections_as_centres(self, tmp_path):
        path = tmp_path / 'detections.csv'
        pd.DataFrame([('img_000000.png', 1.0, 2.0, 4.0, 6.0, 0.9)],
                     columns=['filename', 'x', 'y', 'w', 'h', 'score']).to_csv(path, index=False)
        np.testing.assert_allclose(read_predicted_points(path)['img_000000.png'], [[3.0, 5.0]])
