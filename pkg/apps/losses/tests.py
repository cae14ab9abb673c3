# apps/losses/tests.py
import math

import numpy as np
import pytest
from pydantic import ValidationError

from apps.common.exceptions import LabelError, ProbabilityMapError
from apps.diffcore import Tape, Variable, backward, parameter
from apps.diffcore.gradcheck import grad_check
from apps.losses.classification import cross_entropy
from apps.losses.counting import CountPair, rounded_count, smooth_l1, soft_count, softplus_count
from apps.losses.hausdorff import WhdParams, batch_whd_loss, whd_loss, whd_terms


def whd_oracle(p, points, alpha, eps, d_max, s):
    """Direct double-loop evaluation of the weighted Hausdorff loss"""
    h, w = p.shape
    pixels = [(c, r) for r in range(h) for c in range(w)]
    values = [p[r, c] for r in range(h) for c in range(w)]
    if len(points):
        term1_num = 0.0
        for (x, y), px in zip(pixels, values):
            term1_num += px * min(math.hypot(x - a, y - b) for a, b in points)
        term2 = 0.0
        for a, b in points:
            term2 += min(
                (math.hypot(x - a, y - b) + eps) / (px ** alpha + eps / d_max)
                for (x, y), px in zip(pixels, values)
            )
        term2 /= len(points)
    else:
        term1_num = sum(px * d_max for px in values)
        term2 = 0.0
    term1 = term1_num / (sum(values) + eps)
    c_hat = math.log1p(math.exp(s)) if s < 30 else s + math.log1p(math.exp(-s))
    residual = len(points) - c_hat
    term3 = 0.5 * residual ** 2 if abs(residual) < 1 else abs(residual) - 0.5
    return term1 + term2 + term3


def params_for(h, w, **kwargs):
    return WhdParams(image_height=h, image_width=w, **kwargs)


class TestCounting:
    def test_soft_count(self):
        assert soft_count(np.zeros((4, 4))) == 0.0
        one = np.zeros((3, 3))
        one[1, 1] = 1.0
        assert soft_count(one) == 1.0
        assert soft_count(np.full((2, 2), 0.25)) == 1.0

    def test_soft_count_range(self):
        with pytest.raises(ProbabilityMapError):
            soft_count(np.array([[1.5, 0.0]]))

    @pytest.mark.parametrize('x,expected', [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-2.0, 1.5)])
    def test_smooth_l1(self, x, expected):
        assert smooth_l1(x) == expected

    def test_smooth_l1_continuity(self):
        assert smooth_l1(1.0 - 1e-12) == pytest.approx(smooth_l1(1.0), abs=1e-9)
        h = 1e-7
        left = (smooth_l1(1.0) - smooth_l1(1.0 - h)) / h
        right = (smooth_l1(1.0 + h) - smooth_l1(1.0)) / h
        assert left == pytest.approx(1.0, abs=1e-6)
        assert right == pytest.approx(1.0, abs=1e-6)

    def test_softplus_count(self):
        assert softplus_count(0.0) == pytest.approx(0.693147, abs=1e-6)
        assert softplus_count(50.0) == pytest.approx(50.0, abs=1e-12)
        assert softplus_count(-50.0) == pytest.approx(math.exp(-50.0), rel=1e-6)
        assert softplus_count(-50.0) > 0

    def test_rounded_count_ties_to_even(self):
        assert rounded_count(2.5) == 2
        assert rounded_count(3.5) == 4
        assert rounded_count(0.49) == 0

    def test_count_pair(self):
        pair = CountPair.from_signal(true_count=2, signal=math.log(math.e ** 2 - 1))
        assert pair.estimated == pytest.approx(2.0)
        assert pair.rounded == 2
        assert pair.loss == pytest.approx(0.0, abs=1e-12)


class TestWhdParams:
    def test_default_diagonal(self):
        assert params_for(3, 5).max_distance == pytest.approx(math.sqrt(4 + 16))

    def test_override(self):
        assert params_for(3, 5, d_max=2.0).max_distance == 2.0

    @pytest.mark.parametrize('kwargs', [{'alpha': 0.5}, {'epsilon': 0.0}, {'d_max': -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            params_for(4, 4, **kwargs)


class TestWhdLoss:
    def test_perfect_single_point(self):
        p = np.zeros((2, 2))
        p[0, 0] = 1.0
        s = math.log(math.e - 1.0)
        params = params_for(2, 2, alpha=4, epsilon=1e-6)
        loss = whd_loss(Variable(p), [(0.0, 0.0)], params, Variable(s)).value
        assert loss <= 2e-6
        term1, term2, term3 = whd_terms(Variable(p), [(0.0, 0.0)], params, Variable(s))
        assert term1.value == 0.0
        assert term2.value == pytest.approx(1e-6 / (1 + 1e-6 / math.sqrt(2)), rel=1e-9)
        assert term3.value == pytest.approx(0.0, abs=1e-12)

    def test_empty_map(self):
        params = params_for(2, 2)
        loss = whd_loss(Variable(np.zeros((2, 2))), [(0.0, 0.0)], params, Variable(-50.0)).value
        assert loss == pytest.approx(math.sqrt(2) + 0.5, abs=1e-5)

    def test_empty_point_set(self):
        p = np.full((3, 3), 0.5)
        params = params_for(3, 3)
        term1, term2, term3 = whd_terms(Variable(p), np.zeros((0, 2)), params, Variable(-50.0))
        assert term1.value == pytest.approx(4.5 * params.max_distance / (4.5 + 1e-6))
        assert term2.value == 0.0
        assert term3.value == pytest.approx(0.0, abs=1e-12)

    def test_rejects_out_of_range_map(self):
        with pytest.raises(ProbabilityMapError):
            whd_loss(Variable(np.full((2, 2), 1.2)), [(0.0, 0.0)], params_for(2, 2), Variable(0.0))

    @pytest.mark.parametrize('alpha', [1.0, 2.0, 4.0])
    def test_matches_oracle(self, alpha):
        rng = np.random.default_rng(int(alpha))
        for _ in range(70):
            h, w = rng.integers(1, 9, size=2)
            if h == 1 and w == 1:
                w = 2
            k = rng.integers(0, 5)
            points = np.column_stack([rng.uniform(0, w - 1, k), rng.uniform(0, h - 1, k)])
            p = rng.uniform(0, 1, size=(h, w))
            s = rng.normal(scale=3.0)
            params = params_for(int(h), int(w), alpha=alpha)
            loss = whd_loss(Variable(p), points, params, Variable(s)).value
            expected = whd_oracle(p, [tuple(pt) for pt in points], alpha, params.epsilon, params.max_distance, s)
            assert loss == pytest.approx(expected, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize('seed', range(10))
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = parameter(rng.uniform(0.2, 0.9, size=(8, 8)))
        s = parameter(rng.normal())
        points = rng.uniform(0, 7, size=(3, 2))
        params = params_for(8, 8, alpha=2.0)
        assert grad_check(lambda p, s: whd_loss(p, points, params, s), [p, s]) < 1e-4

    def test_non_negative_and_permutation_invariant(self):
        rng = np.random.default_rng(11)
        params = params_for(6, 6)
        for _ in range(20):
            p = rng.uniform(0, 1, size=(6, 6))
            points = rng.uniform(0, 5, size=(4, 2))
            s = rng.normal()
            loss = whd_loss(Variable(p), points, params, Variable(s)).value
            shuffled = whd_loss(Variable(p), points[rng.permutation(4)], params, Variable(s)).value
            assert loss >= 0
            assert loss == pytest.approx(shuffled, rel=1e-12)

    @pytest.mark.parametrize('alpha', [1.0, 2.0, 4.0])
    def test_perfect_prediction_limit(self, alpha):
        rng = np.random.default_rng(7)
        for _ in range(10):
            cells = rng.choice(64, size=rng.integers(1, 5), replace=False)
            p = np.zeros((8, 8))
            p.flat[cells] = 1.0
            points = np.column_stack([cells % 8, cells // 8]).astype(float)
            c = len(points)
            s = math.log(math.expm1(c))
            params = params_for(8, 8, alpha=alpha)
            loss = whd_loss(Variable(p), points, params, Variable(s)).value
            assert loss <= 2 * params.epsilon * (1 + params.max_distance)

    def test_far_mass_never_lowers_term1(self):
        params = params_for(8, 8)
        p = np.full((8, 8), 0.1)
        points = [(0.0, 0.0)]
        before = whd_terms(Variable(p), points, params, Variable(0.0))[0].value
        p[7, 7] = 0.9
        after = whd_terms(Variable(p), points, params, Variable(0.0))[0].value
        assert after >= before

    def test_batch_average(self):
        rng = np.random.default_rng(3)
        maps = rng.uniform(0, 1, size=(2, 1, 4, 4))
        points = [rng.uniform(0, 3, size=(2, 2)), np.zeros((0, 2))]
        signals = rng.normal(size=2)
        params = params_for(4, 4)
        expected = np.mean([
            whd_loss(Variable(maps[i, 0]), points[i], params, Variable(signals[i])).value for i in range(2)
        ])
        batch = batch_whd_loss(Variable(maps), points, params, Variable(signals)).value
        assert batch == pytest.approx(expected, rel=1e-12)


class TestCrossEntropy:
    def test_uniform(self):
        assert cross_entropy(Variable([[0.0, 0.0]]), [0]).value == pytest.approx(math.log(2))

    def test_confident(self):
        value = cross_entropy(Variable([[1000.0, 0.0]]), [0]).value
        assert np.isfinite(value)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_label_range(self):
        with pytest.raises(LabelError):
            cross_entropy(Variable([[0.0, 1.0]]), [2])

    @pytest.mark.parametrize('seed', range(10))
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        logits = parameter(rng.normal(size=(4, 2)))
        labels = rng.integers(0, 2, size=4)
        assert grad_check(lambda x: cross_entropy(x, labels), [logits]) < 1e-4

    def test_backward_matches_softmax_difference(self):
        logits = parameter([[1.0, 2.0], [0.5, -0.5]])
        labels = [1, 0]
        with Tape() as tape:
            backward(tape, cross_entropy(logits, labels))
        probs = np.exp(logits.value) / np.exp(logits.value).sum(axis=1, keepdims=True)
        onehot = np.eye(2)[labels]
        np.testing.assert_allclose(logits.grad, (probs - onehot) / 2, atol=1e-12)
