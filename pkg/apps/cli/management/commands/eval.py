# apps/cli/management/commands/eval.py
from pathlib import Path

from rich.table import Table

from apps.cli.management.base import RunConfigCommand
from apps.common.utils import get_project_setting, parse_key_values
from apps.metrics.services.evaluation_service import (
    METRICS_NAME, EvaluationService, read_metrics, read_predicted_points, write_metrics,
)
from apps.synthdata.services.dataset_service import SPLITS, read_split_ground_truth

TABLE_COLUMNS = [
    ('model', 'Model'), ('precision', 'Precision'), ('recall', 'Recall'), ('f1', 'F1'),
    ('count_me', 'ME'), ('count_mse', 'MSE'), ('count_rmse', 'RMSE'), ('count_mae', 'MAE'),
    ('count_mape', 'MAPE %'), ('loc_rmse', 'Loc RMSE'), ('tpi_seconds', 'TPI (s)'),
]


def metrics_table(frame, title: str) -> Table:
    table = Table(title=title)
    for _, header in TABLE_COLUMNS:
        table.add_column(header, justify='left' if header == 'Model' else 'right')
    for row in frame.to_dict('records'):
        table.add_row(*[
            str(row[key]) if key == 'model' else f'{row[key]:.4f}'
            for key, _ in TABLE_COLUMNS
        ])
    return table


def model_name_for(pred_path: Path, fallback: str) -> str:
    """Model recorded by infer next to its predictions"""
    resolved = pred_path.parent / get_project_setting('RESOLVED_CONFIG_NAME', 'resolved_config.cfg')
    if resolved.is_file():
        return parse_key_values(resolved.read_text(encoding='utf-8')).get('model', fallback)
    return fallback


class Command(RunConfigCommand):
    help = 'Score predicted points against a dataset split and write metrics.csv'

    def add_command_arguments(self, parser):
        parser.add_argument('--pred', required=True, help='pred_points.csv or detections.csv')
        parser.add_argument('--gt', required=True, help='Dataset directory written by gen')
        parser.add_argument('--split', choices=SPLITS, default='test')
        parser.add_argument('--out', required=True, help='Directory for metrics.csv')

    def run(self, config, **options):
        pred_path = Path(options['pred'])
        split = options['split']
        predictions = read_predicted_points(pred_path)
        _, truths = read_split_ground_truth(options['gt'], split)

        model = model_name_for(pred_path, config.model)
        report = EvaluationService(config.match_radius).evaluate(predictions, truths, model, split)
        path = write_metrics([report], Path(options['out']) / METRICS_NAME)

        frame = read_metrics(path)
        self.print_table(metrics_table(frame[(frame['model'] == model) & (frame['split'] == split)],
                                       f'{split} split, radius {config.match_radius:g}px'))
        if report.precision_undefined:
            self.stdout.write(self.style.WARNING('No predicted points: precision is undefined and reported as 0'))
        self.stdout.write(self.style.SUCCESS(f'Wrote {path}'))
