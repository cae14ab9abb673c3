# apps/diffcore/tests.py
import itertools

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from apps.common.exceptions import (
    CheckpointError, ConfigurationError, GradientError, LabelError, ShapeError,
)
from apps.diffcore import Tape, TapeRecord, Variable, apply_op, as_tensor, backward, parameter, set_default_dtype
from apps.diffcore import functional as F
from apps.diffcore.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint
from apps.diffcore.gradcheck import grad_check

SEEDS = range(10)


def conv_oracle(x, k, stride, padding):
    n, c, h, w = x.shape
    kn, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, kn, ho, wo))
    for b in range(n):
        for o in range(kn):
            for i in range(ho):
                for j in range(wo):
                    total = 0.0
                    for ch in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                total += xp[b, ch, i * stride + di, j * stride + dj] * k[o, ch, di, dj]
                    out[b, o, i, j] = total
    return out


def away_from_zero(rng, shape, gap=0.05):
    values = rng.normal(size=shape)
    return np.where(np.abs(values) < gap, np.sign(values + 1e-12) * gap, values)


def distinct_values(rng, shape):
    return rng.permutation(np.prod(shape)).reshape(shape) * 0.37 + rng.normal(size=shape) * 0.01


class TestElementwise:
    def test_add(self):
        out = F.add(Variable([1.0, 2.0]), Variable([3.0, 4.0]))
        np.testing.assert_array_equal(out.value, [4.0, 6.0])

    def test_square_gradient(self):
        x = parameter([3.0])
        with Tape() as tape:
            root = F.reduce_sum(F.mul(x, x))
            backward(tape, root)
        np.testing.assert_array_equal(x.grad, [6.0])

    def test_division_by_zero(self):
        with pytest.raises(ZeroDivisionError):
            F.div(Variable([1.0]), Variable([0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match='differ'):
            F.add(Variable([1.0, 2.0]), Variable([1.0, 2.0, 3.0]))

    def test_scalar_operand(self):
        x = parameter([1.0, 2.0, 3.0])
        with Tape() as tape:
            root = F.reduce_sum(x * 2.0 - 1.0)
            backward(tape, root)
        np.testing.assert_array_equal(x.grad, [2.0, 2.0, 2.0])

    def test_reflected_division(self):
        x = parameter([2.0, 4.0])
        with Tape() as tape:
            root = F.reduce_sum(1.0 / x)
            backward(tape, root)
        np.testing.assert_allclose(x.grad, [-0.25, -0.0625])

    @pytest.mark.parametrize('kind', ['add', 'sub', 'mul', 'div'])
    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradients(self, kind, seed):
        rng = np.random.default_rng(seed)
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.uniform(0.5, 2.0, size=(3, 4)))
        assert grad_check(lambda a, b: F.reduce_sum(F.elementwise(kind, a, b)), [a, b]) < 1e-4

    @pytest.mark.parametrize('seed', SEEDS)
    def test_power_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(rng.uniform(0.1, 1.0, size=(5,)))
        assert grad_check(lambda x: F.reduce_sum(F.power(x, 4.0)), [x]) < 1e-4


class TestLinear:
    def test_pick(self):
        out = F.linear(Variable([[1.0, 0.0]]), Variable([[2.0, 0.0], [0.0, 3.0]]), Variable([0.0, 0.0]))
        np.testing.assert_array_equal(out.value, [[2.0, 0.0]])

    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        out = F.linear(Variable(x), Variable(np.eye(3)), Variable(np.zeros(3)))
        np.testing.assert_array_equal(out.value, x)

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(1)
        x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                expected[i, j] = sum(x[i, k] * w[k, j] for k in range(4)) + b[j]
        np.testing.assert_allclose(F.linear(Variable(x), Variable(w), Variable(b)).value, expected, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            F.linear(Variable(np.ones((2, 3))), Variable(np.ones((4, 2))), Variable(np.zeros(2)))

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x, w, b = (parameter(rng.normal(size=s)) for s in [(3, 4), (4, 2), (2,)])
        assert grad_check(lambda x, w, b: F.reduce_sum(F.power(F.linear(x, w, b), 2.0)), [x, w, b]) < 1e-4


class TestConv2d:
    def test_scalar_kernel(self):
        out = F.conv2d(Variable(np.ones((1, 1, 2, 2))), Variable(np.full((1, 1, 1, 1), 2.0)))
        np.testing.assert_array_equal(out.value, np.full((1, 1, 2, 2), 2.0))

    def test_full_support_sum(self):
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        out = F.conv2d(Variable(x), Variable(np.ones((1, 1, 3, 3))), padding=1)
        assert out.value[0, 0, 1, 1] == x.sum()

    @pytest.mark.parametrize('stride,padding', list(itertools.product([1, 2, 3], [0, 1, 2])))
    def test_matches_loop_oracle(self, stride, padding):
        rng = np.random.default_rng(stride * 10 + padding)
        x, k = rng.normal(size=(1, 2, 6, 6)), rng.normal(size=(3, 2, 3, 3))
        out = F.conv2d(Variable(x), Variable(k), stride=stride, padding=padding)
        expected = conv_oracle(x, k, stride, padding)
        assert out.shape == expected.shape
        np.testing.assert_allclose(out.value, expected, atol=1e-12)

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(rng.normal(size=(1, 2, 6, 6)))
        k = parameter(rng.normal(size=(3, 2, 3, 3)))
        b = parameter(rng.normal(size=3))
        f = lambda x, k, b: F.reduce_sum(F.power(F.conv2d(x, k, b, stride=2, padding=1), 2.0))
        assert grad_check(f, [x, k, b]) < 1e-4

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError, match='larger'):
            F.conv2d(Variable(np.ones((1, 1, 2, 2))), Variable(np.ones((1, 1, 5, 5))))

    def test_conv_relu_chain(self):
        rng = np.random.default_rng(3)
        x = parameter(rng.normal(size=(1, 2, 5, 5)))
        k = parameter(rng.normal(size=(2, 2, 3, 3)))
        pre = F.conv2d(x, k, padding=1).value
        # nudge the input so no pre-activation sits near the relu kink
        while np.min(np.abs(pre)) < 1e-3:
            x.value += 1e-2
            pre = F.conv2d(x, k, padding=1).value
        assert grad_check(lambda x, k: F.reduce_sum(F.relu(F.conv2d(x, k, padding=1))), [x, k]) < 1e-4


class TestMaxpool:
    def test_single_window(self):
        out = F.maxpool2d(Variable([[[[1.0, 2.0], [3.0, 4.0]]]]))
        np.testing.assert_array_equal(out.value, [[[[4.0]]]])

    def test_constant_input_routes_to_first(self):
        x = parameter(np.ones((1, 1, 4, 4)))
        with Tape() as tape:
            out = F.maxpool2d(x)
            backward(tape, F.reduce_sum(out))
        np.testing.assert_array_equal(out.value, np.ones((1, 1, 2, 2)))
        expected = np.zeros((4, 4))
        expected[::2, ::2] = 1.0
        np.testing.assert_array_equal(x.grad[0, 0], expected)

    def test_matches_window_scan(self):
        x = np.random.default_rng(5).normal(size=(2, 3, 8, 8))
        out = F.maxpool2d(Variable(x)).value
        for b, c, i, j in itertools.product(range(2), range(3), range(4), range(4)):
            assert out[b, c, i, j] == max(x[b, c, 2 * i + di, 2 * j + dj] for di in range(2) for dj in range(2))

    def test_odd_input_padded(self):
        out = F.maxpool2d(Variable(-np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.value, -np.ones((1, 1, 2, 2)))

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(distinct_values(rng, (1, 2, 6, 6)))
        assert grad_check(lambda x: F.reduce_sum(F.power(F.maxpool2d(x), 2.0)), [x]) < 1e-4


class TestUpsample:
    def test_replication(self):
        out = F.upsample_nearest(Variable([[[[1.0, 2.0]]]]), 2)
        np.testing.assert_array_equal(out.value[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2]])

    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(1, 2, 3, 3))
        np.testing.assert_array_equal(F.upsample_nearest(Variable(x), 1).value, x)

    def test_gradient_counts_replicas(self):
        x = parameter(np.ones((1, 1, 2, 3)))
        with Tape() as tape:
            backward(tape, F.reduce_sum(F.upsample_nearest(x, 3)))
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 3), 9.0))

    def test_invalid_factor(self):
        with pytest.raises(ConfigurationError):
            F.upsample_nearest(Variable(np.ones((1, 1, 2, 2))), 0)


class TestBatchNorm:
    def test_constant_channel(self):
        state = F.BatchNormState(1)
        out = F.batchnorm2d(Variable(np.full((2, 1, 3, 3), 7.0)), Variable([1.0]), Variable([0.0]), state, True)
        np.testing.assert_allclose(out.value, 0.0, atol=1e-6)

    def test_shift(self):
        x = np.random.default_rng(0).normal(size=(4, 2, 3, 3))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = F.batchnorm2d(Variable(x), Variable([1.0, 1.0]), Variable([5.0, 5.0]), F.BatchNormState(2), True)
        np.testing.assert_allclose(out.value.mean(axis=(0, 2, 3)), [5.0, 5.0], atol=1e-9)

    def test_running_stats(self):
        x = np.random.default_rng(1).normal(loc=3.0, size=(2, 1, 2, 2))
        state = F.BatchNormState(1)
        F.batchnorm2d(Variable(x), Variable([1.0]), Variable([0.0]), state, True, momentum=0.1)
        np.testing.assert_allclose(state.running_mean, [0.1 * x.mean()])
        np.testing.assert_allclose(state.running_var, [0.9 + 0.1 * x.var(ddof=1)])

    def test_eval_uses_running_stats(self):
        state = F.BatchNormState(1)
        state.running_mean[:] = 2.0
        state.running_var[:] = 4.0
        out = F.batchnorm2d(Variable(np.full((1, 1, 1, 1), 6.0)), Variable([1.0]), Variable([0.0]),
                            state, False, eps=1e-12)
        np.testing.assert_allclose(out.value, [[[[2.0]]]])

    def test_single_element_channel(self):
        with pytest.raises(ShapeError):
            F.batchnorm2d(Variable(np.ones((1, 1, 1, 1))), Variable([1.0]), Variable([0.0]),
                          F.BatchNormState(1), True)

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(rng.normal(size=(2, 3, 4, 4)))
        gamma = parameter(rng.uniform(0.5, 1.5, size=3))
        beta = parameter(rng.normal(size=3))
        weights = rng.normal(size=(2, 3, 4, 4))
        state = F.BatchNormState(3)
        f = lambda x, g, b: F.reduce_sum(F.mul(F.batchnorm2d(x, g, b, state, True), weights))
        assert grad_check(f, [x, gamma, beta]) < 1e-4


class TestActivations:
    def test_values(self):
        np.testing.assert_array_equal(F.relu(Variable([-1.0, 2.0])).value, [0.0, 2.0])
        assert F.softplus(Variable(0.0)).value == pytest.approx(np.log(2.0))
        assert F.sigmoid(Variable(0.0)).value == 0.5

    def test_softplus_extremes(self):
        out = F.softplus(Variable([50.0, -50.0, 1000.0])).value
        assert out[0] == pytest.approx(50.0, abs=1e-12)
        assert out[1] == pytest.approx(np.exp(-50.0), rel=1e-6)
        assert np.isfinite(out[2])

    @pytest.mark.parametrize('kind', ['relu', 'sigmoid', 'softplus'])
    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradients(self, kind, seed):
        x = parameter(away_from_zero(np.random.default_rng(seed), (4, 3)))
        assert grad_check(lambda x: F.reduce_sum(F.power(F.activation(kind, x), 2.0)), [x]) < 1e-4

    @pytest.mark.parametrize('seed', SEEDS)
    def test_smooth_l1_gradient(self, seed):
        x = parameter(np.random.default_rng(seed).uniform(-3, 3, size=8))
        x.value[np.abs(np.abs(x.value) - 1.0) < 0.05] += 0.1
        assert grad_check(lambda x: F.reduce_sum(F.smooth_l1(x)), [x]) < 1e-4


class TestConcat:
    def test_channel_arithmetic(self):
        out = F.concat_channels(Variable(np.zeros((1, 2, 3, 3))), Variable(np.ones((1, 3, 3, 3))))
        assert out.shape == (1, 5, 3, 3)

    def test_empty_channel_identity(self):
        x = np.random.default_rng(0).normal(size=(1, 2, 3, 3))
        out = F.concat_channels(Variable(x), Variable(np.zeros((1, 0, 3, 3))))
        np.testing.assert_array_equal(out.value, x)

    def test_backward_splits(self):
        rng = np.random.default_rng(2)
        a, b = parameter(rng.normal(size=(2, 2, 3, 3))), parameter(rng.normal(size=(2, 3, 3, 3)))
        weights = rng.normal(size=(2, 5, 3, 3))
        with Tape() as tape:
            backward(tape, F.reduce_sum(F.mul(F.concat_channels(a, b), weights)))
        np.testing.assert_array_equal(a.grad, weights[:, :2])
        np.testing.assert_array_equal(b.grad, weights[:, 2:])

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            F.concat_channels(Variable(np.zeros((1, 2, 3, 3))), Variable(np.zeros((1, 2, 4, 4))))


class TestReduce:
    def test_sum(self):
        assert F.reduce_sum(Variable([1.0, 2.0, 3.0])).value == 6.0

    def test_min_routes_to_argmin(self):
        x = parameter([3.0, 1.0, 2.0])
        with Tape() as tape:
            out = F.reduce_min(x)
            backward(tape, out)
        assert out.value == 1.0
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_min_tie_lowest_index(self):
        x = parameter([[2.0, 1.0], [1.0, 5.0]])
        with Tape() as tape:
            backward(tape, F.reduce_min(x))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0], [0.0, 0.0]])

    def test_mean_gradient(self):
        x = parameter(np.ones(4))
        with Tape() as tape:
            backward(tape, F.reduce_mean(x))
        np.testing.assert_array_equal(x.grad, np.full(4, 0.25))

    def test_empty_reduction(self):
        with pytest.raises(ShapeError):
            F.reduce_min(Variable(np.zeros((0, 3))), axes=0)

    @pytest.mark.parametrize('kind', ['sum', 'mean', 'min'])
    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradients_over_axes(self, kind, seed):
        rng = np.random.default_rng(seed)
        x = parameter(distinct_values(rng, (3, 4, 2)))
        f = lambda x: F.reduce_sum(F.power(F.reduce(kind, x, axes=(0, 2)), 2.0))
        assert grad_check(f, [x]) < 1e-4


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(F.softmax_logits(Variable([[0.0, 0.0]])).value, [[0.5, 0.5]])

    def test_no_overflow(self):
        out = F.softmax_logits(Variable([[1000.0, 0.0]])).value
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one(self):
        out = F.softmax_logits(Variable(np.random.default_rng(0).normal(scale=5, size=(20, 4)))).value
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_needs_two_classes(self):
        with pytest.raises(ShapeError):
            F.softmax_logits(Variable([[1.0]]))

    @pytest.mark.parametrize('seed', SEEDS)
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(rng.normal(size=(4, 3)))
        weights = rng.normal(size=(4, 3))
        assert grad_check(lambda x: F.reduce_sum(F.mul(F.softmax_logits(x), weights)), [x]) < 1e-4
        assert grad_check(lambda x: F.reduce_sum(F.mul(F.log_softmax(x), weights)), [x]) < 1e-4

    def test_pick_label_range(self):
        with pytest.raises(LabelError):
            F.pick(Variable(np.zeros((2, 2))), [0, 2])


class TestPlumbing:
    @pytest.mark.parametrize('seed', SEEDS)
    def test_reshape_broadcast_select(self, seed):
        rng = np.random.default_rng(seed)
        x = parameter(rng.normal(size=(3, 1)))
        weights = rng.normal(size=(2, 3, 4))
        f = lambda x: F.reduce_sum(F.mul(F.broadcast_to(x, (2, 3, 4)), weights))
        assert grad_check(f, [x]) < 1e-4
        y = parameter(rng.normal(size=(4, 2)))
        g = lambda y: F.reduce_sum(F.power(F.reshape(F.index_select(y, [2, 0, 2]), (6,)), 2.0))
        assert grad_check(g, [y]) < 1e-4

    @hyp_settings(max_examples=30, deadline=None)
    @given(
        size=st.integers(1, 8), kernel=st.integers(1, 3),
        stride=st.integers(1, 3), padding=st.integers(0, 3),
    )
    def test_conv_shape_algebra(self, size, kernel, stride, padding):
        if kernel > size + 2 * padding:
            return
        out = F.conv2d(Variable(np.ones((1, 1, size, size))), Variable(np.ones((2, 1, kernel, kernel))),
                       stride=stride, padding=padding)
        expected = (size + 2 * padding - kernel) // stride + 1
        assert out.shape == (1, 2, expected, expected)


class TestBackward:
    def test_tape_records_ops_in_order(self):
        offset = Variable([1.0, 1.0])
        x = parameter([1.0, 2.0])
        with Tape() as tape:
            y = F.mul(x, 3.0)
            F.add(y, offset)
        assert [record.op for record in tape.records] == ['mul', 'add']
        assert all(isinstance(record, TapeRecord) for record in tape.records)
        assert tape.records[0].output is y and tape.records[1].inputs[1] is offset

    def test_constants_are_not_recorded(self):
        with Tape() as tape:
            F.mul(Variable([1.0]), 2.0)
        assert len(tape) == 0

    def test_non_scalar_root(self):
        x = parameter([1.0, 2.0])
        with Tape() as tape:
            y = F.mul(x, x)
            with pytest.raises(ShapeError, match='scalar'):
                backward(tape, y)

    def test_two_uses_accumulate(self):
        x = parameter([2.0])
        with Tape() as tape:
            backward(tape, F.reduce_sum(F.add(F.mul(x, 3.0), F.mul(x, 4.0))))
        np.testing.assert_array_equal(x.grad, [7.0])

    def test_double_backward_doubles_exactly(self):
        rng = np.random.default_rng(4)
        x = parameter(rng.normal(size=(1, 2, 5, 5)))
        k = parameter(rng.normal(size=(2, 2, 3, 3)))
        with Tape() as tape:
            root = F.reduce_sum(F.mul(F.conv2d(x, k, padding=1), F.conv2d(x, k, padding=1)))
            backward(tape, root, retain_graph=True)
            first_x, first_k = x.grad.copy(), k.grad.copy()
            backward(tape, root)
        np.testing.assert_array_equal(x.grad, 2 * first_x)
        np.testing.assert_array_equal(k.grad, 2 * first_k)

    def test_tape_reset_after_backward(self):
        x = parameter([1.0])
        with Tape() as tape:
            backward(tape, F.reduce_sum(F.mul(x, x)))
        assert len(tape) == 0

    def test_no_recording_without_tape(self):
        x = parameter([1.0])
        assert not F.mul(x, x).requires_grad

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(9)
            x = parameter(rng.normal(size=(2, 2, 4, 4)))
            k = parameter(rng.normal(size=(3, 2, 3, 3)))
            with Tape() as tape:
                out = F.reduce_sum(F.relu(F.conv2d(x, k, padding=1)))
                backward(tape, out)
            return out.value, x.grad, k.grad

        for first, second in zip(run(), run()):
            np.testing.assert_array_equal(first, second)


class TestGradCheck:
    def test_quadratic(self):
        x = parameter(np.random.default_rng(0).normal(size=6))
        assert grad_check(lambda x: F.reduce_sum(F.mul(x, x)), [x]) < 1e-9

    def test_detects_wrong_gradient(self):
        def wrong_square(x):
            return apply_op('wrong_square', (x,), x.value ** 2, lambda g: (g * 3.0 * x.value,))

        x = parameter(np.random.default_rng(1).uniform(0.5, 1.5, size=4))
        assert grad_check(lambda x: F.reduce_sum(wrong_square(x)), [x]) > 0.1

    def test_non_finite_function(self):
        x = parameter([0.0])
        with pytest.raises(GradientError):
            grad_check(lambda x: F.reduce_sum(F.mul(x, np.inf)), [x])

    def test_sampled_coordinates(self):
        x = parameter(np.random.default_rng(2).normal(size=100))
        assert grad_check(lambda x: F.reduce_sum(F.power(x, 2.0)), [x], max_coords=10) < 1e-6


class TestCheckpointFormat:
    def test_layout(self):
        data = encode_checkpoint({'kind': 'unet'}, [('w', np.arange(6.0).reshape(2, 3))])
        assert data.startswith(MAGIC)
        descriptor, records = decode_checkpoint(data)
        assert descriptor == {'kind': 'unet'}
        assert records[0][0] == 'w'
        np.testing.assert_array_equal(records[0][1], np.arange(6.0).reshape(2, 3))

    def test_bad_magic_names_expected(self):
        with pytest.raises(CheckpointError, match='WHDSPOT1'):
            decode_checkpoint(b'NOTACKPT' + b'\0' * 16)

    def test_truncated(self):
        data = encode_checkpoint({}, [('w', np.ones(3))])
        with pytest.raises(CheckpointError, match='truncated'):
            decode_checkpoint(data[:-4])


class TestPrecision:
    def test_float32_opt_in(self):
        set_default_dtype('float32')
        try:
            assert Variable([1.0]).value.dtype == np.float32
        finally:
            set_default_dtype('float64')
        assert Variable([1.0]).value.dtype == np.float64

    def test_unknown_precision(self):
        with pytest.raises(ConfigurationError):
            set_default_dtype('float16')

    def test_as_tensor_follows_default_dtype(self):
        set_default_dtype('float32')
        try:
            assert as_tensor([1, 2]).dtype == np.float32
            assert as_tensor([1, 2], dtype=np.float64).dtype == np.float64
        finally:
            set_default_dtype('float64')
        values = as_tensor(np.arange(6).reshape(2, 3).T)
        assert values.dtype == np.float64 and values.flags['C_CONTIGUOUS']
