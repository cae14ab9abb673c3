# apps/trainer/tests.py
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from apps.common.exceptions import CheckpointError, ConfigurationError, TrainingDivergedError
from apps.diffcore import parameter
from apps.diffcore.checkpoint import MAGIC
from apps.networks.config import RcnnNetConfig, UNetConfig
from apps.networks.rcnn import build_rcnn_net
from apps.networks.unet import build_unet, unet_forward
from apps.synthdata.config import SceneConfig
from apps.synthdata.services.dataset_service import Sample, image_filename
from apps.synthdata.services.scene_renderer import render_scene
from apps.trainer.checkpoints import (
    BEST_NAME, LATEST_NAME, checkpoint_bytes, checkpoint_load, checkpoint_save, load_into,
)
from apps.trainer.config import TrainConfig
from apps.trainer.optim import SGDMomentum, sgd_momentum_step
from apps.trainer.services.training_service import HISTORY_COLUMNS, HISTORY_NAME, TrainingService, train

TINY_SCENES = SceneConfig(
    image_size=16, count_range=(1, 2), sheep_length_range=(4, 5), sheep_width_range=(2, 3), seed=3,
)


def scene_samples(indices, config=TINY_SCENES):
    samples = []
    for index in indices:
        raster, gt = render_scene(config, index)
        samples.append(Sample(image_filename(index), raster / 255.0, gt))
    return samples


def tiny_unet(seed=0):
    return build_unet(UNetConfig(input_size=16), seed=seed)


def tiny_config(tmp_path=None, **overrides):
    values = dict(learning_rate=1e-3, batch_size=2, epochs=2, validate_every=2, seed=5)
    if tmp_path is not None:
        values['checkpoint_dir'] = tmp_path
    values.update(overrides)
    return TrainConfig(**values)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert (config.learning_rate, config.momentum, config.batch_size, config.validate_every) == (1e-4, 0.9, 10, 2)
        assert config.epochs == 100 and TrainConfig.paper().epochs == 500

    @pytest.mark.parametrize('kwargs', [
        {'learning_rate': 0}, {'momentum': 1.0}, {'momentum': -0.1}, {'batch_size': 0}, {'validate_every': 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            TrainConfig(**kwargs)

    def test_empty_patience_disables_early_stop(self):
        assert TrainConfig(early_stop_patience='none').early_stop_patience is None

    def test_whd_params(self):
        params = TrainConfig(whd_alpha=2).whd_params(16, 16)
        assert params.alpha == 2 and params.max_distance == pytest.approx(math.sqrt(450))


class TestSgdMomentum:
    def test_single_step(self):
        theta = parameter(np.array([1.0]))
        theta.grad = np.array([0.1])
        velocity = np.zeros(1)
        sgd_momentum_step([theta], [velocity], lr=1e-4, mu=0.9)
        assert velocity[0] == pytest.approx(-1e-5)
        assert theta.value[0] == pytest.approx(0.99999)
        assert theta.grad[0] == 0.0

    def test_zero_momentum_is_plain_sgd(self):
        theta = parameter(np.array([2.0, -1.0]))
        optimizer = SGDMomentum([theta], lr=0.5, momentum=0.0)
        for _ in range(2):
            theta.grad = np.array([1.0, 2.0])
            optimizer.step()
        np.testing.assert_allclose(theta.value, [1.0, -3.0])

    def test_velocity_recursion(self):
        theta = parameter(np.array([0.0]))
        optimizer = SGDMomentum([theta], lr=0.1, momentum=0.9)
        for _ in range(2):
            theta.grad = np.array([2.0])
            optimizer.step()
        assert optimizer.velocities[0][0] == pytest.approx(-0.1 * 2.0 * 1.9)

    @pytest.mark.parametrize('lr,momentum', [(0.0, 0.9), (0.1, 1.0)])
    def test_invalid(self, lr, momentum):
        with pytest.raises(ConfigurationError):
            SGDMomentum([parameter(np.zeros(1))], lr=lr, momentum=momentum)


class TestCheckpoints:
    def test_save_load_save_identical(self, tmp_path):
        model = tiny_unet(seed=4)
        first = checkpoint_save(model, tmp_path / 'a.ckpt')
        second = checkpoint_save(checkpoint_load(first), tmp_path / 'b.ckpt')
        assert first.read_bytes() == second.read_bytes()

    def test_forward_identical_after_load(self, tmp_path):
        model = tiny_unet(seed=4).eval()
        images = np.random.default_rng(0).uniform(size=(2, 3, 16, 16))
        before = unet_forward(model, images).probmap.value
        restored = checkpoint_load(checkpoint_save(model, tmp_path / 'm.ckpt')).eval()
        np.testing.assert_array_equal(unet_forward(restored, images).probmap.value, before)

    def test_rcnn_round_trip(self, tmp_path):
        model = build_rcnn_net(RcnnNetConfig(variant='network1'), seed=2)
        restored = checkpoint_load(checkpoint_save(model, tmp_path / 'n1.ckpt'))
        assert restored.kind == 'network1'
        assert checkpoint_bytes(restored) == checkpoint_bytes(model)

    def test_wrong_architecture(self, tmp_path):
        path = checkpoint_save(tiny_unet(), tmp_path / 'unet.ckpt')
        with pytest.raises(CheckpointError, match='architecture'):
            load_into(build_rcnn_net(RcnnNetConfig(variant='network1')), path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / 'bad.ckpt'
        path.write_bytes(b'NOTACKPT' + bytes(16))
        with pytest.raises(CheckpointError, match=MAGIC.decode()):
            checkpoint_load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match='not found'):
            checkpoint_load(tmp_path / 'absent.ckpt')


class TestTrainingService:
    def test_cadence_and_artifacts(self, tmp_path):
        history = train(tiny_unet(), scene_samples(range(4)), tiny_config(tmp_path), scene_samples(range(4, 6)))
        assert [v.epoch for v in history.validations] == [2]
        assert history.best_epoch == 2
        frame = pd.read_csv(tmp_path / HISTORY_NAME)
        assert list(frame.columns) == HISTORY_COLUMNS
        assert frame['epoch'].tolist() == [1, 2]
        assert math.isnan(frame.loc[0, 'val_f1']) and not math.isnan(frame.loc[1, 'val_f1'])
        assert (tmp_path / BEST_NAME).is_file() and (tmp_path / LATEST_NAME).is_file()

    def test_final_epoch_validates_off_cadence(self, tmp_path):
        history = train(
            tiny_unet(), scene_samples(range(3)), tiny_config(tmp_path, epochs=1, validate_every=2), scene_samples([3]),
        )
        assert [v.epoch for v in history.validations] == [1]
        assert history.best_epoch == 1
        assert (tmp_path / BEST_NAME).is_file()

    def test_latest_checkpoint_matches_model(self, tmp_path):
        model = tiny_unet()
        train(model, scene_samples(range(3)), tiny_config(tmp_path, epochs=1), [])
        assert (tmp_path / LATEST_NAME).read_bytes() == checkpoint_bytes(model)

    def test_deterministic(self, tmp_path):
        runs = []
        for name in ('first', 'second'):
            model = tiny_unet(seed=1)
            history = train(model, scene_samples(range(4)), tiny_config(tmp_path / name), scene_samples([4, 5]))
            runs.append((history.train_losses, (tmp_path / name / LATEST_NAME).read_bytes()))
        assert runs[0] == runs[1]

    def test_invariant_to_file_order(self):
        samples = scene_samples(range(5))
        forward = train(tiny_unet(seed=1), samples, tiny_config(epochs=1))
        backward = train(tiny_unet(seed=1), samples[::-1], tiny_config(epochs=1))
        assert forward.train_losses == backward.train_losses

    def test_validation_leaves_state_untouched(self):
        model = tiny_unet(seed=2)
        service = TrainingService(model, tiny_config())
        before = checkpoint_bytes(model)
        service.validate(scene_samples(range(3)), epoch=2)
        assert checkpoint_bytes(model) == before

    def test_loss_must_match_model(self):
        with pytest.raises(ConfigurationError, match='whd'):
            TrainingService(tiny_unet(), tiny_config(loss_kind='cross-entropy'))
        with pytest.raises(ConfigurationError, match='cross-entropy'):
            TrainingService(build_rcnn_net(RcnnNetConfig(variant='network1')), tiny_config())

    def test_empty_training_set(self):
        with pytest.raises(ConfigurationError):
            TrainingService(tiny_unet(), tiny_config()).train([])

    def test_divergence_restores_last_epoch(self, tmp_path, monkeypatch):
        model = tiny_unet()
        service = TrainingService(model, tiny_config(tmp_path, epochs=3, validate_every=5))
        real_step = service._step

        def failing_step(batch, epoch, indices):
            loss = real_step(batch, epoch, indices)
            return math.nan if epoch == 2 else loss

        monkeypatch.setattr(service, '_step', failing_step)
        with pytest.raises(TrainingDivergedError) as caught:
            service.train(scene_samples(range(4)))
        assert (caught.value.epoch, caught.value.last_good_epoch) == (2, 1)
        assert checkpoint_bytes(model) == (tmp_path / LATEST_NAME).read_bytes()
        assert len(pd.read_csv(tmp_path / HISTORY_NAME)) == 1

    def test_early_stopping(self, tmp_path):
        history = train(
            tiny_unet(), scene_samples(range(2)), tiny_config(tmp_path, epochs=10, validate_every=1,
                                                              early_stop_patience=1, learning_rate=1e-9),
            scene_samples([2, 3]),
        )
        assert history.stopped_early
        assert len(history.train_losses) < 10

    def test_augmented_training_is_deterministic(self):
        samples = scene_samples(range(4))
        first = train(tiny_unet(seed=3), samples, tiny_config(epochs=1, augment=True))
        second = train(tiny_unet(seed=3), samples, tiny_config(epochs=1, augment=True))
        assert first.train_losses == second.train_losses

    def test_classifier_path(self, tmp_path):
        model = build_rcnn_net(RcnnNetConfig(variant='network1'), seed=0)
        config = tiny_config(tmp_path, loss_kind='cross-entropy', epochs=1, validate_every=1, proposals_per_image=64)
        service = TrainingService(model, config)
        history = service.train(scene_samples(range(3)), scene_samples([3]))
        assert np.isfinite(history.train_losses[0])
        assert len(history.validations) == 1

    def test_classifier_batch_balance(self):
        model = build_rcnn_net(RcnnNetConfig(variant='network1'), seed=0)
        service = TrainingService(model, tiny_config(loss_kind='cross-entropy', proposals_per_image=128))
        patches, labels = service._classifier_batch(scene_samples([0]), [0, 1], [0])
        assert patches.shape[1:] == (3, 64, 64)
        assert 0 < (labels == 1).sum() <= 2
        assert (labels == 0).sum() <= 6

    def test_repeated_batch_cross_entropy_decreases(self):
        model = build_rcnn_net(RcnnNetConfig(variant='network1'), seed=0)
        service = TrainingService(model, tiny_config(loss_kind='cross-entropy', proposals_per_image=128))
        batch = scene_samples([0, 1])
        first = service._step(batch, 1, [0, 1])
        for _ in range(9):
            last = service._step(batch, 1, [0, 1])
        assert last < first


@pytest.mark.slow
def test_desk_unet_reaches_target_f1(tmp_path):
    from apps.metrics.services.evaluation_service import EvaluationService
    from apps.postprocess.services.prediction_service import PredictionService
    from apps.synthdata.services.dataset_service import DatasetService, load_dataset

    scenes = SceneConfig(count_range=(1, 8), contrast_margin=0.25, seed=11)
    DatasetService(scenes).make_dataset(500, (0.8, 0.1, 0.1), tmp_path / 'data')
    model = build_unet(UNetConfig(input_size=64), seed=0)
    config = TrainConfig(learning_rate=1e-3, epochs=100, checkpoint_dir=tmp_path / 'run')
    train(model, load_dataset(tmp_path / 'data', 'train'), config, load_dataset(tmp_path / 'data', 'val'))

    best = checkpoint_load(tmp_path / 'run' / BEST_NAME)
    test = load_dataset(tmp_path / 'data', 'test')
    predictions = PredictionService(best).predict(test)
    report = EvaluationService(radius=4).evaluate(
        {p.filename: p.points for p in predictions}, {s.filename: s.gt for s in test}, 'unet', 'test',
    )
    assert report.f1 >= 0.85
    assert report.count_stats.rmse <= 1.5


@pytest.mark.slow
def test_desk_unet_beats_network1(tmp_path):
    from apps.metrics.services.evaluation_service import EvaluationService
    from apps.postprocess.services.prediction_service import PredictionService
    from apps.synthdata.services.dataset_service import DatasetService, load_dataset

    scenes = SceneConfig(count_range=(1, 8), contrast_margin=0.25, seed=11)
    DatasetService(scenes).make_dataset(500, (0.8, 0.1, 0.1), tmp_path / 'data')
    train_set = load_dataset(tmp_path / 'data', 'train')
    val_set = load_dataset(tmp_path / 'data', 'val')
    test = load_dataset(tmp_path / 'data', 'test')
    truths = {s.filename: s.gt for s in test}

    scores = {}
    for name, model, loss_kind in (
        ('unet', build_unet(UNetConfig(input_size=64), seed=0), 'whd'),
        ('network1', build_rcnn_net(RcnnNetConfig(variant='network1'), seed=0), 'cross-entropy'),
    ):
        config = TrainConfig(learning_rate=1e-3, epochs=100, loss_kind=loss_kind, checkpoint_dir=tmp_path / name)
        train(model, train_set, config, val_set)
        predictions = PredictionService(checkpoint_load(tmp_path / name / BEST_NAME)).predict(test)
        scores[name] = EvaluationService(radius=4).evaluate(
            {p.filename: p.points for p in predictions}, truths, name, 'test',
        ).f1
    assert scores['unet'] > scores['network1']
