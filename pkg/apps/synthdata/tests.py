# apps/synthdata/tests.py
import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from pydantic import ValidationError

from apps.common.exceptions import ConfigurationError, DatasetError, SceneRenderError
from apps.synthdata.augment import AUGMENT_OPS, augment
from apps.synthdata.config import SceneConfig
from apps.synthdata.ground_truth import GroundTruth, ellipse_coverage, ellipse_radius
from apps.synthdata.services.dataset_service import (
    DatasetService, dataset_checksum, load_dataset, read_manifest, split_sizes, to_batch,
)
from apps.synthdata.services.scene_renderer import SceneRenderer, render_scene

GEOMETRIC_OPS = [op for op in AUGMENT_OPS if op != 'brightness-scale']


def coverage_overlay(gt: GroundTruth, shape) -> np.ndarray:
    overlay = np.zeros(shape)
    for (cx, cy), (length, width), theta in zip(gt.centroids, gt.sizes, gt.orientations):
        overlay += ellipse_coverage(shape, (cx, cy), length, width, theta)
    return overlay


def busy_config(**kwargs) -> SceneConfig:
    return SceneConfig(count_range=(6, 10), **kwargs)


class TestSceneConfig:
    def test_parses_strings(self):
        config = SceneConfig(count_range='2,5', sheep_length_range='6,8')
        assert config.count_range == (2, 5)
        assert config.sheep_length_range == (6.0, 8.0)

    @pytest.mark.parametrize('kwargs', [
        {'count_range': '5,2'},
        {'brightness_range': (0.5, 1.5)},
        {'count_range': (40, 40)},
        {'sheep_length_range': (70.0, 80.0)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            SceneConfig(**kwargs)

    def test_overlap_flag_lifts_capacity_check(self):
        assert SceneConfig(image_size=16, count_range=(20, 20), sheep_length_range=(4, 5),
                           sheep_width_range=(2, 3), allow_overlap=True).count_range == (20, 20)

    def test_paper_preset(self):
        config = SceneConfig.paper()
        assert config.image_size == 256
        assert config.sheep_length_range == (18.0, 22.0)


class TestRenderScene:
    def test_empty_scene(self):
        image, gt = render_scene(SceneConfig(count_range=(0, 0)), 0)
        assert image.shape == (64, 64, 3) and image.dtype == np.uint8
        assert gt.count == 0 and gt.boxes.shape == (0, 4)

    def test_deterministic(self):
        config = busy_config(seed=7)
        first_image, first_gt = render_scene(config, 3)
        second_image, second_gt = render_scene(config, 3)
        np.testing.assert_array_equal(first_image, second_image)
        np.testing.assert_array_equal(first_gt.centroids, second_gt.centroids)
        np.testing.assert_array_equal(first_gt.boxes, second_gt.boxes)

    def test_index_changes_scene(self):
        config = busy_config()
        assert not np.array_equal(render_scene(config, 0)[0], render_scene(config, 1)[0])

    @pytest.mark.parametrize('index', range(10))
    def test_ground_truth_consistency(self, index):
        config = busy_config(seed=11)
        image, gt = render_scene(config, index)
        size = config.image_size
        assert 6 <= gt.count <= 10
        assert np.all((gt.centroids >= -0.5) & (gt.centroids <= size - 0.5))
        np.testing.assert_allclose(gt.box_centers(), gt.centroids, atol=1e-9)
        for (cx, cy), (length, width), theta, (bx, by, bw, bh) in zip(
                gt.centroids, gt.sizes, gt.orientations, gt.boxes):
            rows, cols = np.nonzero(ellipse_radius((size, size), (cx, cy), length, width, theta) < 1)
            assert len(rows)
            assert np.all((cols >= bx - 1e-9) & (cols <= bx + bw + 1e-9))
            assert np.all((rows >= by - 1e-9) & (rows <= by + bh + 1e-9))

    @pytest.mark.parametrize('index', range(10))
    def test_contrast_margin(self, index):
        config = busy_config(seed=5, fence_probability=0.5)
        image, gt = render_scene(config, index)
        brightness = image.astype(np.float64).mean(axis=2) / 255.0
        inside = [ellipse_coverage(image.shape[:2], c, s[0], s[1], t) > 0
                  for c, s, t in zip(gt.centroids, gt.sizes, gt.orientations)]
        background = brightness[~np.logical_or.reduce(inside)].mean()
        for mask in inside:
            assert brightness[mask].mean() >= background + config.contrast_margin

    def test_placement_avoids_fence(self):
        config = SceneConfig(count_range=(8, 8))
        fence = np.zeros((64, 64), dtype=bool)
        fence[:, 30:32] = True
        placed = SceneRenderer(config)._place(np.random.default_rng(0), 8, fence, 0)
        for cx, cy, length, width, theta, _ in placed:
            coverage = ellipse_coverage((64, 64), (cx, cy), length, width, theta)
            assert not (coverage > 0)[fence].any()

    def test_impossible_placement(self, settings):
        settings.WHDSPOT_SETTINGS = {**settings.WHDSPOT_SETTINGS, 'PLACEMENT_RETRIES': 20}
        config = SceneConfig(image_size=32, count_range=(16, 16), sheep_length_range=(6, 6),
                             sheep_width_range=(6, 6), fence_probability=0.0)
        with pytest.raises(SceneRenderError, match='lower count_range or min_separation'):
            render_scene(config, 0)


class TestAugment:
    def setup_method(self):
        self.image, self.gt = render_scene(busy_config(seed=2), 4)

    def test_h_flip_formula(self):
        flipped, gt = augment(self.image, self.gt, ['h-flip'])
        np.testing.assert_allclose(gt.centroids[:, 0], 63 - self.gt.centroids[:, 0])
        np.testing.assert_allclose(gt.centroids[:, 1], self.gt.centroids[:, 1])
        np.testing.assert_array_equal(flipped, self.image[:, ::-1])

    def test_rot180_twice_is_identity(self):
        image, gt = augment(self.image, self.gt, ['rot180', 'rot180'])
        np.testing.assert_array_equal(image, self.image)
        np.testing.assert_allclose(gt.centroids, self.gt.centroids, atol=1e-9)
        np.testing.assert_allclose(gt.boxes, self.gt.boxes, atol=1e-9)
        np.testing.assert_allclose(np.cos(2 * gt.orientations), np.cos(2 * self.gt.orientations), atol=1e-9)

    @pytest.mark.parametrize('op', GEOMETRIC_OPS)
    def test_overlay_follows_pixels(self, op):
        overlay = coverage_overlay(self.gt, (64, 64))
        moved_overlay, _ = augment(overlay[..., None], self.gt, [op])
        _, moved_gt = augment(self.image, self.gt, [op])
        np.testing.assert_allclose(coverage_overlay(moved_gt, (64, 64)), moved_overlay[..., 0], atol=1e-9)

    def test_brightness_keeps_geometry(self):
        image, gt = augment(self.image, self.gt, ['brightness-scale'], brightness=0.5)
        np.testing.assert_array_equal(gt.centroids, self.gt.centroids)
        assert image.dtype == np.uint8
        assert image.max() <= np.ceil(self.image.max() * 0.5)

    def test_unknown_op(self):
        with pytest.raises(ConfigurationError):
            augment(self.image, self.gt, ['shear'])

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from(AUGMENT_OPS), max_size=5))
    def test_composed_ops_keep_box_centres(self, ops):
        image, gt = augment(self.image, self.gt, ops)
        assert image.shape == self.image.shape
        np.testing.assert_allclose(gt.box_centers(), gt.centroids, atol=1e-9)
        assert np.all((gt.centroids >= -0.5) & (gt.centroids <= 63.5))


class TestDataset:
    @pytest.mark.parametrize('total,expected', [
        (100, {'train': 80, 'val': 10, 'test': 10}),
        (1, {'train': 1, 'val': 0, 'test': 0}),
        (15, {'train': 13, 'val': 1, 'test': 1}),
    ])
    def test_split_sizes(self, total, expected):
        assert split_sizes(total, [0.8, 0.1, 0.1]) == expected

    def test_split_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            split_sizes(10, [0.5, 0.1, 0.1])

    def test_make_dataset_layout(self, tmp_path):
        manifest = DatasetService(busy_config()).make_dataset(100, [0.8, 0.1, 0.1], tmp_path)
        for split, size in [('train', 80), ('val', 10), ('test', 10)]:
            assert len(list((tmp_path / split).glob('img_*.png'))) == size
            assert (tmp_path / split / 'points.csv').is_file()
        assert list(manifest.columns) == ['filename', 'split', 'count', 'seed', 'index']
        assert manifest['filename'].tolist()[:2] == ['img_000000.png', 'img_000001.png']
        assert manifest['index'].tolist() == list(range(100))
        on_disk = read_manifest(tmp_path)
        assert on_disk['count'].tolist() == manifest['count'].tolist()

    def test_single_image_goes_to_train(self, tmp_path):
        DatasetService(busy_config()).make_dataset(1, [0.8, 0.1, 0.1], tmp_path)
        assert len(load_dataset(tmp_path, 'train')) == 1
        assert load_dataset(tmp_path, 'val') == []

    def test_round_trip(self, tmp_path):
        config = busy_config(seed=3)
        DatasetService(config).make_dataset(10, [0.8, 0.1, 0.1], tmp_path)
        samples = load_dataset(tmp_path, 'train')
        assert [s.filename for s in samples] == [f'img_{i:06d}.png' for i in range(8)]
        for index, sample in enumerate(samples):
            raster, gt = render_scene(config, index)
            np.testing.assert_allclose(sample.gt.centroids, np.round(gt.centroids, 3), atol=1e-9)
            np.testing.assert_allclose(sample.image, raster / 255.0)
        batch = to_batch([s.image for s in samples])
        assert batch.shape == (8, 3, 64, 64)

    def test_checksum_stable(self, tmp_path):
        for name in ('a', 'b'):
            DatasetService(busy_config(seed=7), threads=2 if name == 'b' else 1).make_dataset(
                20, [0.8, 0.1, 0.1], tmp_path / name)
        assert dataset_checksum(tmp_path / 'a') == dataset_checksum(tmp_path / 'b')

    def test_missing_image_named(self, tmp_path):
        DatasetService(busy_config()).make_dataset(10, [0.8, 0.1, 0.1], tmp_path)
        (tmp_path / 'test' / 'img_000009.png').unlink()
        with pytest.raises(DatasetError, match='img_000009.png'):
            load_dataset(tmp_path, 'test')

    def test_corrupt_image_named(self, tmp_path):
        DatasetService(busy_config()).make_dataset(10, [0.8, 0.1, 0.1], tmp_path)
        (tmp_path / 'val' / 'img_000008.png').write_bytes(b'not a png')
        with pytest.raises(DatasetError, match='img_000008.png'):
            load_dataset(tmp_path, 'val')

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match='manifest'):
            load_dataset(tmp_path, 'train')
