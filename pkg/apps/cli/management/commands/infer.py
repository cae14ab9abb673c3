# apps/cli/management/commands/infer.py
from pathlib import Path

from apps.cli.management.base import RunConfigCommand
from apps.cli.overlays import render_overlay, write_overlay
from apps.common.exceptions import ShapeError
from apps.networks.registry import is_point_detector
from apps.postprocess.services.prediction_service import DETECTIONS_NAME, PRED_POINTS_NAME, PredictionService
from apps.synthdata.services.dataset_service import SPLITS, load_dataset
from apps.trainer.checkpoints import checkpoint_load

OVERLAY_DIR = 'overlays'


class Command(RunConfigCommand):
    help = 'Run a trained checkpoint over a dataset split and write predictions and overlays'

    def add_command_arguments(self, parser):
        parser.add_argument('--ckpt', required=True, help='Checkpoint file')
        parser.add_argument('--data', required=True, help='Dataset directory written by gen')
        parser.add_argument('--out', required=True, help='Directory for predictions and overlays')
        parser.add_argument('--split', choices=SPLITS, default='test')

    def run(self, config, **options):
        out_dir = Path(options['out'])
        model = checkpoint_load(options['ckpt'])
        samples = load_dataset(options['data'], options['split'])
        if is_point_detector(model) and samples:
            size = samples[0].image.shape[0]
            if size != model.config.input_size:
                raise ShapeError(f"Checkpoint expects {model.config.input_size}px images, dataset has {size}px")

        service = PredictionService(
            model, config.extraction_params(), config.detector_params(), threads=config.threads,
        )
        predictions = service.predict(samples)

        out_dir.mkdir(parents=True, exist_ok=True)
        if service.outputs_points:
            written = service.write_pred_points(predictions, out_dir / PRED_POINTS_NAME)
        else:
            written = service.write_detections(predictions, out_dir / DETECTIONS_NAME)
        config.model_copy(update={'model': model.kind}).write_resolved(out_dir)

        for sample, prediction in zip(samples, predictions):
            canvas = render_overlay(
                sample.image, sample.gt, points=prediction.points, boxes=prediction.boxes,
                radius=config.match_radius,
            )
            write_overlay(out_dir / OVERLAY_DIR / sample.filename, canvas)

        total = sum(prediction.count for prediction in predictions)
        self.stdout.write(f'{model.kind}: {total} objects in {len(samples)} {options["split"]} images')
        self.stdout.write(self.style.SUCCESS(f'Wrote {written} and {len(samples)} overlays'))
