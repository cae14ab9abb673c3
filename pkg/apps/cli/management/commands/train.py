# apps/cli/management/commands/train.py
from pathlib import Path

from rich.table import Table

from apps.cli.management.base import RunConfigCommand
from apps.common.exceptions import ConfigurationError
from apps.networks.rcnn import build_rcnn_net
from apps.networks.unet import build_unet
from apps.synthdata.services.dataset_service import load_dataset
from apps.trainer.checkpoints import BEST_NAME
from apps.trainer.services.training_service import HISTORY_NAME, TrainingService


class Command(RunConfigCommand):
    help = 'Train a UNet point detector or a proposal classifier on a generated dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset directory written by gen')
        parser.add_argument('--out', required=True, help='Run directory for checkpoints and history')

    def run(self, config, **options):
        out_dir = Path(options['out'])
        train_samples = load_dataset(options['data'], 'train')
        val_samples = load_dataset(options['data'], 'val')
        if not train_samples:
            raise ConfigurationError(f"Dataset {options['data']} has no training images")

        # the training loss is checked against the model before any work starts
        train_config = config.train_config(checkpoint_dir=out_dir)
        if config.model == 'unet':
            model = build_unet(config.unet_config(train_samples[0].image.shape[0]), seed=config.seed)
        else:
            model = build_rcnn_net(config.rcnn_config(config.model), seed=config.seed)
        service = TrainingService(
            model, train_config, config.extraction_params(), config.detector_params(),
            radius=config.match_radius, threads=config.threads,
        )
        out_dir.mkdir(parents=True, exist_ok=True)
        config.write_resolved(out_dir)
        history = service.train(train_samples, val_samples)

        table = Table(title=f'{config.model} training')
        for column in ('epochs', 'final train loss', 'best epoch', 'best val F1'):
            table.add_column(column)
        best_f1 = max((v.f1 for v in history.validations), default=float('nan'))
        table.add_row(
            str(len(history.train_losses)), f'{history.train_losses[-1]:.4f}',
            str(history.best_epoch), f'{best_f1:.4f}',
        )
        self.print_table(table)
        self.stdout.write(self.style.SUCCESS(
            f'Wrote {out_dir / BEST_NAME} and {out_dir / HISTORY_NAME} ({train_config.loss_kind} loss)'
        ))
