# apps/metrics/services/evaluation_service.py
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from apps.common.exceptions import EvaluationError
from apps.common.utils import PathLike
from apps.metrics.matching import MatchResult, match_points
from apps.metrics.scores import CountStats, count_errors, localization_rmse, precision_recall_f1
from apps.synthdata.ground_truth import GroundTruth

logger = logging.getLogger(__name__)

METRICS_NAME = 'metrics.csv'
COMPARISON_NAME = 'comparison.csv'
METRICS_COLUMNS = [
    'model', 'split', 'precision', 'recall', 'f1', 'count_me', 'count_mse', 'count_rmse',
    'count_mae', 'count_mape', 'loc_rmse', 'tpi_seconds',
]


@dataclass
class MetricsReport:
    model: str
    split: str
    precision: float
    recall: float
    f1: float
    count_stats: CountStats
    loc_rmse: float
    tpi: Optional[float] = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision_undefined: bool = False
    recall_undefined: bool = False
    loc_rmse_undefined: bool = False

    def to_row(self) -> Dict[str, object]:
        stats = self.count_stats
        return {
            'model': self.model,
            'split': self.split,
            'precision': self.precision,
            'recall': self.recall,
            'f1': self.f1,
            'count_me': stats.me,
            'count_mse': stats.mse,
            'count_rmse': stats.rmse,
            'count_mae': stats.mae,
            'count_mape': stats.mape,
            'loc_rmse': self.loc_rmse,
            'tpi_seconds': self.tpi if self.tpi is not None else math.nan,
        }


def read_predicted_points(path: PathLike) -> Dict[str, np.ndarray]:
    """Points per filename from pred_points.csv, or box centres from detections.csv"""
    path = Path(path)
    if not path.is_file():
        raise EvaluationError(f"Prediction file {path} not found")
    try:
        frame = pd.read_csv(path, dtype={'filename': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise EvaluationError(f"Cannot parse prediction file {path}: {exc}") from exc
    columns = list(frame.columns)
    if columns == ['filename', 'x', 'y', 'score']:
        points = frame[['x', 'y']].to_numpy(float)
    elif columns == ['filename', 'x', 'y', 'w', 'h', 'score']:
        points = frame[['x', 'y']].to_numpy(float) + frame[['w', 'h']].to_numpy(float) / 2.0
    else:
        raise EvaluationError(f"Prediction file {path} has unexpected columns {columns}")
    filenames = frame['filename'].to_numpy()
    return {name: points[filenames == name] for name in pd.unique(filenames)}


class EvaluationService:
    """Scores predicted points against ground truth over one split"""

    def __init__(self, radius: float):
        self.radius = radius

    def evaluate(self, predictions: Mapping[str, np.ndarray], truths: Mapping[str, GroundTruth],
                 model: str, split: str) -> MetricsReport:
        """
        Micro-averaged detection scores and count statistics. The ground-truth
        mapping defines the image set; images absent from predictions have
        no predicted points.
        """
        unknown = sorted(set(predictions) - set(truths))
        if unknown:
            raise EvaluationError(
                f"{len(unknown)} predicted filenames are not in the {split} ground truth: {', '.join(unknown)}"
            )
        if not truths:
            raise EvaluationError(f"No ground-truth images in split '{split}'")

        tp = fp = fn = 0
        distances: List[float] = []
        pred_counts, true_counts = [], []
        for filename, gt in truths.items():
            points = predictions.get(filename, np.zeros((0, 2)))
            match = match_points(points, gt.centroids, self.radius)
            tp, fp, fn = tp + match.tp, fp + match.fp, fn + match.fn
            distances.extend(match.distances)
            pred_counts.append(len(points))
            true_counts.append(gt.count)

        scores = precision_recall_f1(MatchResult(tp, fp, fn))
        loc_rmse, loc_undefined = localization_rmse(distances)
        report = MetricsReport(
            model=model,
            split=split,
            precision=scores.precision,
            recall=scores.recall,
            f1=scores.f1,
            count_stats=count_errors(pred_counts, true_counts),
            loc_rmse=loc_rmse,
            tp=tp,
            fp=fp,
            fn=fn,
            precision_undefined=scores.precision_undefined,
            recall_undefined=scores.recall_undefined,
            loc_rmse_undefined=loc_undefined,
        )
        logger.info(
            f"{model}/{split}: P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
            f"(tp={tp} fp={fp} fn={fn}) count RMSE={report.count_stats.rmse:.4f}"
        )
        if scores.precision_undefined:
            logger.warning(f"{model}/{split}: no predictions, precision reported as 0")
        return report


def evaluate_split(predictions: Mapping[str, np.ndarray], truths: Mapping[str, GroundTruth],
                   radius: float, model: str, split: str) -> MetricsReport:
    return EvaluationService(radius).evaluate(predictions, truths, model, split)


def read_metrics(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        return pd.DataFrame(columns=METRICS_COLUMNS)
    frame = pd.read_csv(path, dtype={'model': str, 'split': str})
    if list(frame.columns) != METRICS_COLUMNS:
        raise EvaluationError(f"Metrics file {path} has columns {list(frame.columns)}, expected {METRICS_COLUMNS}")
    return frame


def _append_row(frame: pd.DataFrame, row: Dict[str, object]) -> pd.DataFrame:
    addition = pd.DataFrame([row], columns=METRICS_COLUMNS)
    if frame.empty:
        return addition
    return pd.concat([frame, addition], ignore_index=True)


def _write_metrics(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame[METRICS_COLUMNS].to_csv(path, index=False, float_format='%.6f')
    return path


def write_metrics(reports: Sequence[MetricsReport], path: PathLike) -> Path:
    """Write rows, replacing any existing row for the same (model, split)"""
    path = Path(path)
    frame = read_metrics(path)
    for report in reports:
        row = report.to_row()
        same = (frame['model'] == report.model) & (frame['split'] == report.split)
        if same.any() and report.tpi is None:
            row['tpi_seconds'] = frame.loc[same, 'tpi_seconds'].iloc[0]
        frame = _append_row(frame[~same], row)
    return _write_metrics(frame, path)


def update_tpi(path: PathLike, model: str, split: str, tpi: float) -> Path:
    """Set tpi_seconds on the (model, split) row, appending a row if needed"""
    path = Path(path)
    frame = read_metrics(path)
    same = (frame['model'] == model) & (frame['split'] == split)
    if same.any():
        frame.loc[same, 'tpi_seconds'] = tpi
    else:
        row = {column: math.nan for column in METRICS_COLUMNS}
        row.update(model=model, split=split, tpi_seconds=tpi)
        frame = _append_row(frame, row)
    return _write_metrics(frame, path)


def compare_runs(paths: Sequence[PathLike]) -> pd.DataFrame:
    """All metrics rows from several runs, best F1 first"""
    frames = []
    for path in paths:
        if not Path(path).is_file():
            raise EvaluationError(f"Metrics file {path} not found")
        frame = read_metrics(path)
        frame.insert(0, 'run', str(Path(path).parent))
        frames.append(frame)
    if not frames:
        raise EvaluationError("No metrics files to compare")
    combined = pd.concat(frames, ignore_index=True)
    return combined.sort_values('f1', ascending=False, kind='stable', na_position='last').reset_index(drop=True)
