# apps/cli/management/commands/bench.py
from pathlib import Path

import numpy as np

from apps.cli.management.base import RunConfigCommand
from apps.common.utils import hardware_note
from apps.metrics.services.evaluation_service import METRICS_NAME, update_tpi
from apps.metrics.timing import time_per_image
from apps.postprocess.services.prediction_service import PredictionService
from apps.synthdata.services.dataset_service import SPLITS, load_dataset
from apps.trainer.checkpoints import checkpoint_load


class Command(RunConfigCommand):
    help = 'Measure inference time per image for a checkpoint'

    def add_command_arguments(self, parser):
        parser.add_argument('--ckpt', required=True, help='Checkpoint file')
        parser.add_argument('--data', required=True, help='Dataset directory written by gen')
        parser.add_argument('--split', choices=SPLITS, default='test')
        parser.add_argument('--out', help='Directory whose metrics.csv receives the tpi')

    def run(self, config, **options):
        model = checkpoint_load(options['ckpt'])
        samples = load_dataset(options['data'], options['split'])
        images = np.stack([sample.image for sample in samples]) if samples else np.zeros((0, 0, 0, 3))
        service = PredictionService(model, config.extraction_params(), config.detector_params(), threads=1)

        if config.reps == 1:
            self.stdout.write(self.style.WARNING('reps=1: a single timing has no variance estimate'))
        tpi = time_per_image(service.predict_images, images, warmup=config.warmup, reps=config.reps)

        self.stdout.write(hardware_note(config.threads))
        self.stdout.write(f'{model.kind} tpi={tpi:.6f}s over {len(images)} images, median of {config.reps}')
        if options.get('out'):
            path = update_tpi(Path(options['out']) / METRICS_NAME, model.kind, options['split'], tpi)
            self.stdout.write(self.style.SUCCESS(f'Updated {path}'))
