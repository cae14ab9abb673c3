# apps/networks/tests.py
import numpy as np
import pytest
from pydantic import ValidationError

from apps.common.exceptions import CheckpointError, ShapeError
from apps.diffcore import Tape, backward
from apps.diffcore.gradcheck import grad_check
from apps.losses.classification import cross_entropy
from apps.losses.hausdorff import WhdParams, batch_whd_loss
from apps.networks.config import RcnnNetConfig, UNetConfig
from apps.networks.rcnn import build_rcnn_net, classify_patches
from apps.networks.registry import build_model
from apps.networks.unet import build_unet, unet_forward


def random_images(n, size, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(n, 3, size, size))


class TestUNetConfig:
    def test_paper_channels(self):
        config = UNetConfig.paper()
        assert config.stages == 8
        assert config.resolved_contraction() == [64, 128, 256, 512, 512, 512, 512, 512]
        assert config.resolved_expansion() == [512, 512, 512, 512, 256, 128, 64, 64]

    def test_desk_bottleneck(self):
        config = UNetConfig(input_size=64, width_scale=0.125)
        assert config.stages == 6
        assert config.resolved_contraction()[-1] == 64

    def test_power_of_two(self):
        with pytest.raises(ValidationError, match='power of two'):
            UNetConfig(input_size=48)

    def test_explicit_channels_length(self):
        with pytest.raises(ValidationError):
            UNetConfig(input_size=16, contraction_channels='4,8,16')


class TestUNet:
    def test_paper_structure(self):
        model = build_unet(UNetConfig.paper(), seed=0)
        assert len(model.down) == 8 and len(model.up) == 8
        assert model.bottleneck_channels == 512
        # the final 1x1 conv reads 128-component maps: 64 expansion + 64 skip channels
        assert model.head.weight.shape == (1, 128, 1, 1)

    def test_desk_forward(self):
        model = build_unet(UNetConfig(input_size=64, width_scale=0.125), seed=0)
        out = unet_forward(model, random_images(2, 64))
        assert model.bottleneck_channels == 64
        assert out.probmap.shape == (2, 1, 64, 64)
        assert out.signal.shape == (2,)
        assert np.all((out.probmap.value >= 0) & (out.probmap.value <= 1))
        assert np.all(out.c_hat >= 0)

    @pytest.mark.parametrize('size', [16, 32, 64, 128, 256])
    def test_spatial_shapes(self, size):
        model = build_unet(UNetConfig(input_size=size, width_scale=1 / 64), seed=1)
        out = unet_forward(model, random_images(1, size))
        assert out.probmap.shape == (1, 1, size, size)

    def test_same_seed_identical(self):
        config = UNetConfig(input_size=32)
        first, second = build_unet(config, seed=3), build_unet(config, seed=3)
        for (name_a, a), (name_b, b) in zip(first.named_parameters(), second.named_parameters()):
            assert name_a == name_b
            np.testing.assert_array_equal(a.value, b.value)

    def test_parameter_names_unique(self):
        names = [name for name, _ in build_unet(UNetConfig(input_size=32)).named_parameters()]
        assert len(names) == len(set(names))

    def test_parameter_count(self):
        model = build_unet(UNetConfig(input_size=64, width_scale=0.125))
        down = (3 * 8 * 9 + 16) + (8 * 16 * 9 + 32) + (16 * 32 * 9 + 64) + (32 * 64 * 9 + 128) + 2 * (64 * 64 * 9 + 128)
        up = (64 * 64 * 9 + 128) + (128 * 64 * 9 + 128) + (128 * 32 * 9 + 64) + (64 * 16 * 9 + 32) \
            + (32 * 8 * 9 + 16) + (16 * 8 * 9 + 16)
        head = 16 + 1
        count_head = 66 + 1
        assert model.parameter_count() == down + up + head + count_head == 259228

    def test_wrong_size(self):
        model = build_unet(UNetConfig(input_size=16))
        with pytest.raises(ShapeError):
            unet_forward(model, random_images(1, 32))

    def test_train_and_eval_differ(self):
        model = build_unet(UNetConfig(input_size=16), seed=0)
        images = random_images(4, 16, seed=2)
        train_out = unet_forward(model, images).probmap.value
        model.eval()
        eval_out = unet_forward(model, images).probmap.value
        assert not np.allclose(train_out, eval_out)

    def test_end_to_end_gradient(self):
        model = build_unet(UNetConfig(input_size=16, width_scale=0.125), seed=5)
        images = random_images(2, 16, seed=6)
        points = [np.array([[3.0, 4.0], [10.0, 12.0]]), np.array([[7.5, 7.5]])]
        params = WhdParams(image_height=16, image_width=16)

        def loss_fn(*_):
            out = unet_forward(model, images)
            return batch_whd_loss(out.probmap, points, params, out.signal)

        error = grad_check(loss_fn, model.parameters(), step=1e-5, max_coords=50, seed=0)
        assert error < 1e-3

    def test_small_step_decreases_loss(self):
        model = build_unet(UNetConfig(input_size=16), seed=7)
        images = random_images(2, 16, seed=8)
        points = [np.array([[4.0, 4.0]]), np.array([[11.0, 2.0], [5.0, 9.0]])]
        params = WhdParams(image_height=16, image_width=16)
        with Tape() as tape:
            out = unet_forward(model, images)
            loss = batch_whd_loss(out.probmap, points, params, out.signal)
            backward(tape, loss)
        base = float(loss.value)
        snapshot = [(var, var.value.copy(), var.grad.copy()) for var in model.parameters()]
        results = {}
        for lr in (1e-2, 1e-3, 1e-4):
            for var, value, grad in snapshot:
                var.value[...] = value - lr * grad
            out = unet_forward(model, images)
            results[lr] = float(batch_whd_loss(out.probmap, points, params, out.signal).value)
        assert results[1e-4] < base


class TestRcnnNets:
    def test_network2_paper_feature(self):
        config = RcnnNetConfig.paper('network2')
        model = build_rcnn_net(config)
        assert config.resolved_network2_channels()[-1] == 512
        assert model.feature_shape == 2 * 2 * 512
        assert model.fc.weight.shape == (2048, 2)

    def test_network1_parameter_count(self):
        model = build_rcnn_net(RcnnNetConfig(variant='network1', patch_size=64))
        side = (64 - 11) // 4 + 1
        expected = 96 * (11 * 11 * 3) + 96 + (96 * side * side) * 2 + 2
        assert model.parameter_count() == expected == 72578

    def test_network2_desk_parameter_count(self):
        model = build_rcnn_net(RcnnNetConfig(variant='network2'))
        channels = [3, 4, 8, 16, 32, 64, 64, 64]
        convs = sum(channels[i] * channels[i + 1] * 9 + 2 * channels[i + 1] for i in range(7))
        assert model.parameter_count() == convs + 64 * 2 + 2 == 98950

    def test_network2_patch_guidance(self):
        with pytest.raises(ValidationError, match='divisible by 128'):
            RcnnNetConfig(variant='network2', patch_size=200)

    def test_default_patch_sizes(self):
        assert RcnnNetConfig(variant='network1').patch_size == 64
        assert RcnnNetConfig(variant='network2').patch_size == 128

    def test_same_seed_identical(self):
        first = build_rcnn_net(RcnnNetConfig(), seed=4)
        second = build_rcnn_net(RcnnNetConfig(), seed=4)
        for a, b in zip(first.parameters(), second.parameters()):
            np.testing.assert_array_equal(a.value, b.value)

    def test_probabilities_sum_to_one(self):
        model = build_rcnn_net(RcnnNetConfig(), seed=0).eval()
        probs = classify_patches(model, random_images(5, 64))
        assert probs.shape == (5, 2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_untrained_near_uniform(self):
        averages = []
        for seed in range(20):
            model = build_rcnn_net(RcnnNetConfig(), seed=seed).eval()
            averages.append(classify_patches(model, random_images(32, 64, seed=seed)).mean(axis=0))
        assert np.abs(np.mean(averages, axis=0) - 0.5).max() < 0.1

    def test_batch_independence_in_eval(self):
        model = build_rcnn_net(RcnnNetConfig(variant='network2'), seed=1).eval()
        patches = random_images(3, 128, seed=3)
        batch = classify_patches(model, patches)
        single = classify_patches(model, patches[1:2])
        np.testing.assert_allclose(single[0], batch[1], rtol=1e-12, atol=1e-12)

    def test_wrong_patch_size(self):
        model = build_rcnn_net(RcnnNetConfig())
        with pytest.raises(ShapeError):
            classify_patches(model, random_images(1, 32))

    def test_cross_entropy_gradient(self):
        model = build_rcnn_net(RcnnNetConfig(), seed=2)
        patches = random_images(4, 64, seed=9)
        labels = np.array([0, 1, 1, 0])
        error = grad_check(lambda *_: cross_entropy(model(patches), labels), model.parameters(),
                           max_coords=40, seed=1)
        assert error < 1e-4


class TestRegistry:
    @pytest.mark.parametrize('model', [
        build_unet(UNetConfig(input_size=32)),
        build_rcnn_net(RcnnNetConfig(variant='network1')),
        build_rcnn_net(RcnnNetConfig(variant='network2')),
    ])
    def test_rebuild_from_descriptor(self, model):
        rebuilt = build_model(model.descriptor)
        assert rebuilt.descriptor == model.descriptor
        assert [n for n, _ in rebuilt.named_parameters()] == [n for n, _ in model.named_parameters()]

    def test_unknown_kind(self):
        with pytest.raises(CheckpointError):
            build_model({'kind': 'alexnet'})
