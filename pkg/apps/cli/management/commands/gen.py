# apps/cli/management/commands/gen.py
from pathlib import Path

from apps.cli.management.base import RunConfigCommand
from apps.synthdata.services.dataset_service import SPLITS, DatasetService, dataset_checksum


class Command(RunConfigCommand):
    help = 'Render a synthetic sheep dataset with train/val/test splits'

    def add_command_arguments(self, parser):
        parser.add_argument('--out', required=True, help='Dataset directory to create')

    def run(self, config, **options):
        out_dir = Path(options['out'])
        manifest = DatasetService(config.scene_config(), threads=config.threads).make_dataset(
            config.total, config.splits, out_dir,
        )
        config.write_resolved(out_dir)

        counts = manifest['split'].value_counts()
        summary = ' '.join(f'{split}={int(counts.get(split, 0))}' for split in SPLITS)
        self.stdout.write(summary)
        self.stdout.write(f'objects={int(manifest["count"].sum())} checksum={dataset_checksum(out_dir)}')
        self.stdout.write(self.style.SUCCESS(f'Dataset written to {out_dir}'))
