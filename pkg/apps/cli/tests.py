# apps/cli/tests.py
import io

import numpy as np
import pandas as pd
import pytest
from django.core.management import call_command, execute_from_command_line
from django.core.management.base import CommandError
from pydantic import ValidationError

from apps.cli.overlays import render_overlay
from apps.cli.runconfig import RunConfig
from apps.metrics.services.evaluation_service import METRICS_COLUMNS
from apps.synthdata.ground_truth import GroundTruth
from apps.synthdata.services.dataset_service import dataset_checksum, read_split_ground_truth

TINY = {
    'image_size': 16, 'count_range': '1,2', 'sheep_length_range': '4,5', 'sheep_width_range': '2,3',
    'total': 10, 'seed': 7,
}


def run(command, **options):
    out = io.StringIO()
    call_command(command, stdout=out, **options)
    return out.getvalue()


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp('pipeline')
    run('gen', out=str(root / 'data'), **TINY)
    run('train', data=str(root / 'data'), out=str(root / 'run'), model='unet', epochs=1, batch_size=4, seed=1)
    return root


class TestRunConfig:
    def test_desk_defaults(self):
        config = RunConfig.resolve()
        assert config.image_size == 64 and config.match_radius == 4.0
        assert config.train_config().loss_kind == 'whd'

    def test_paper_preset(self):
        config = RunConfig.resolve('paper')
        assert config.image_size == 256 and config.epochs == 500
        assert config.match_radius == 10.0
        assert config.scene_config().count_range == (1, 18)
        assert config.rcnn_config('network2').patch_size == 256

    def test_layering(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text('preset=paper\nepochs=7\nlearning_rate=0.001\n')
        config = RunConfig.resolve(config_file=path, overrides={'epochs': '3', 'seed': None})
        assert config.preset == 'paper' and config.image_size == 256
        assert config.epochs == 3 and config.learning_rate == 0.001

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text('epochz=3\n')
        with pytest.raises(ValidationError, match='epochz'):
            RunConfig.resolve(config_file=path)

    def test_resolved_file_round_trip(self, tmp_path):
        config = RunConfig.resolve('desk', overrides={'radius': '3.5', 'proposal_scales': '6,10'})
        written = config.write_resolved(tmp_path)
        assert RunConfig.resolve(config_file=written) == config

    def test_classifier_models_use_cross_entropy(self):
        assert RunConfig(model='network1').train_config().loss_kind == 'cross-entropy'

    def test_precision_defaults_to_project_dtype(self, settings):
        settings.WHDSPOT_SETTINGS = {**settings.WHDSPOT_SETTINGS, 'DEFAULT_DTYPE': 'float32'}
        assert RunConfig.resolve().precision == 'float32'
        assert RunConfig.resolve(overrides={'precision': 'float64'}).precision == 'float64'


class TestOverlays:
    def test_upscaled_with_annotations(self):
        image = np.full((8, 8, 3), 0.5)
        gt = GroundTruth(np.array([[3.0, 3.0]]), np.array([[1.0, 1.0, 4.0, 4.0]]))
        plain = render_overlay(image, None, scale=4)
        assert plain.shape == (32, 32, 3) and plain.dtype == np.uint8
        circled = render_overlay(image, gt, radius=2, scale=4)
        crossed = render_overlay(image, None, points=np.array([[3.0, 3.0]]), scale=4)
        boxed = render_overlay(image, None, boxes=np.array([[-0.5, -0.5, 4.0, 4.0]]), scale=4)
        for canvas in (circled, crossed, boxed):
            assert np.any(canvas != plain)
        assert tuple(boxed[0, 0]) != (128, 128, 128)


class TestGen:
    def test_summary_and_files(self, tmp_path):
        output = run('gen', out=str(tmp_path / 'data'), **TINY)
        assert 'train=8 val=1 test=1' in output
        assert (tmp_path / 'data' / 'resolved_config.cfg').is_file()

    def test_deterministic(self, tmp_path):
        run('gen', out=str(tmp_path / 'a'), **TINY)
        run('gen', out=str(tmp_path / 'b'), **TINY)
        assert dataset_checksum(tmp_path / 'a') == dataset_checksum(tmp_path / 'b')

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as caught:
            execute_from_command_line(['manage.py', 'gen', '--total', '5'])
        assert caught.value.code == 2

    def test_impossible_scene_is_runtime_error(self, tmp_path):
        with pytest.raises(CommandError, match='count_range'):
            run('gen', out=str(tmp_path / 'data'), image_size=16, count_range='30,40')


class TestPipeline:
    def test_train_artifacts(self, pipeline):
        run_dir = pipeline / 'run'
        for name in ('history.csv', 'best.ckpt', 'latest.ckpt', 'resolved_config.cfg'):
            assert (run_dir / name).is_file()
        assert list(pd.read_csv(run_dir / 'history.csv').columns) == ['epoch', 'train_loss', 'val_loss', 'val_f1']

    def test_incompatible_loss(self, pipeline, tmp_path):
        with pytest.raises(CommandError, match='loss'):
            run('train', data=str(pipeline / 'data'), out=str(tmp_path), model='network1', loss_kind='whd')

    def test_infer_is_idempotent(self, pipeline):
        args = dict(ckpt=str(pipeline / 'run' / 'best.ckpt'), data=str(pipeline / 'data'))
        run('infer', out=str(pipeline / 'pred'), **args)
        first = (pipeline / 'pred' / 'pred_points.csv').read_bytes()
        run('infer', out=str(pipeline / 'pred'), **args)
        assert (pipeline / 'pred' / 'pred_points.csv').read_bytes() == first
        assert not (pipeline / 'pred' / 'detections.csv').exists()
        assert len(list((pipeline / 'pred' / 'overlays').glob('*.png'))) == 1

    def test_eval_perfect_predictions(self, pipeline, tmp_path):
        _, truths = read_split_ground_truth(pipeline / 'data', 'test')
        rows = [(name, x, y, 1.0) for name, gt in truths.items() for x, y in gt.centroids]
        pred = tmp_path / 'pred_points.csv'
        pd.DataFrame(rows, columns=['filename', 'x', 'y', 'score']).to_csv(pred, index=False)
        run('eval', pred=str(pred), gt=str(pipeline / 'data'), out=str(tmp_path / 'eval'))
        metrics = pd.read_csv(tmp_path / 'eval' / 'metrics.csv')
        assert list(metrics.columns) == METRICS_COLUMNS
        assert metrics.loc[0, ['precision', 'recall', 'f1']].tolist() == [1.0, 1.0, 1.0]
        assert metrics.loc[0, 'count_mae'] == 0.0

    def test_eval_unknown_filename(self, pipeline, tmp_path):
        pred = tmp_path / 'pred_points.csv'
        pd.DataFrame([('img_999999.png', 1.0, 1.0, 1.0)], columns=['filename', 'x', 'y', 'score']).to_csv(pred, index=False)
        with pytest.raises(CommandError, match='img_999999.png'):
            run('eval', pred=str(pred), gt=str(pipeline / 'data'), out=str(tmp_path))

    def test_eval_missing_file_exits_one(self, pipeline, tmp_path):
        with pytest.raises(SystemExit) as caught:
            execute_from_command_line([
                'manage.py', 'eval', '--pred', str(tmp_path / 'absent.csv'),
                '--gt', str(pipeline / 'data'), '--out', str(tmp_path),
            ])
        assert caught.value.code == 1

    def test_infer_eval_bench_report(self, pipeline, tmp_path):
        ckpt = str(pipeline / 'run' / 'best.ckpt')
        run('infer', ckpt=ckpt, data=str(pipeline / 'data'), out=str(tmp_path / 'pred'))
        run('eval', pred=str(tmp_path / 'pred' / 'pred_points.csv'), gt=str(pipeline / 'data'),
            out=str(tmp_path / 'pred'))
        output = run('bench', ckpt=ckpt, data=str(pipeline / 'data'), out=str(tmp_path / 'pred'), reps=1, warmup=0)
        assert 'reps=1' in output and 'hardware:' in output
        metrics = pd.read_csv(tmp_path / 'pred' / 'metrics.csv')
        assert metrics['model'].tolist() == ['unet']
        assert metrics.loc[0, 'tpi_seconds'] > 0

        output = run('report', metrics=[str(tmp_path / 'pred' / 'metrics.csv')], out=str(tmp_path / 'report'))
        assert (tmp_path / 'report' / 'comparison.csv').is_file()
        assert 'unet' in output

    def test_classifier_writes_detections(self, pipeline, tmp_path):
        run('train', data=str(pipeline / 'data'), out=str(tmp_path / 'run'), model='network1', epochs=1,
            batch_size=4, proposals_per_image=64)
        run('infer', ckpt=str(tmp_path / 'run' / 'best.ckpt'), data=str(pipeline / 'data'), out=str(tmp_path / 'pred'))
        assert (tmp_path / 'pred' / 'detections.csv').is_file()
        assert not (tmp_path / 'pred' / 'pred_points.csv').exists()


@pytest.mark.slow
def test_unet_faster_than_network2(tmp_path):
    from apps.metrics.timing import time_per_image
    from apps.networks.config import RcnnNetConfig, UNetConfig
    from apps.networks.rcnn import build_rcnn_net
    from apps.networks.unet import build_unet
    from apps.postprocess.services.prediction_service import PredictionService

    images = np.random.default_rng(0).uniform(size=(4, 64, 64, 3))
    unet = PredictionService(build_unet(UNetConfig(input_size=64)))
    network2 = PredictionService(build_rcnn_net(RcnnNetConfig(variant='network2')))
    assert time_per_image(unet.predict_images, images) < time_per_image(network2.predict_images, images)
