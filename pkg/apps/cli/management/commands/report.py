# apps/cli/management/commands/report.py
from pathlib import Path

from apps.cli.management.base import RunConfigCommand
from apps.cli.management.commands.eval import metrics_table
from apps.metrics.services.evaluation_service import COMPARISON_NAME, compare_runs


class Command(RunConfigCommand):
    help = 'Combine metrics.csv files from several runs into one comparison table'

    def add_command_arguments(self, parser):
        parser.add_argument('--metrics', nargs='+', required=True, help='metrics.csv files')
        parser.add_argument('--out', required=True, help='Directory for comparison.csv')

    def run(self, config, **options):
        combined = compare_runs(options['metrics'])
        out_dir = Path(options['out'])
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / COMPARISON_NAME
        combined.to_csv(path, index=False, float_format='%.6f')
        self.print_table(metrics_table(combined, 'Runs by F1'))
        self.stdout.write(self.style.SUCCESS(f'Wrote {path} with {len(combined)} rows'))
