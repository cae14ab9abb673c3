# apps/metrics/scores.py
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from apps.common.exceptions import EvaluationError
from apps.metrics.matching import MatchResult


class DetectionScores(NamedTuple):
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False


@dataclass(frozen=True)
class CountStats:
    me: float
    mse: float
    rmse: float
    mae: float
    mape: float

    def as_dict(self):
        return asdict(self)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when either input is 0"""
    if precision <= 0 or recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(match: MatchResult) -> DetectionScores:
    """Empty denominators give 0 with the matching undefined flag set"""
    predicted = match.tp + match.fp
    actual = match.tp + match.fn
    precision = match.tp / predicted if predicted else 0.0
    recall = match.tp / actual if actual else 0.0
    return DetectionScores(precision, recall, f1_score(precision, recall), predicted == 0, actual == 0)


def count_errors(pred_counts: Sequence[int], true_counts: Sequence[int]) -> CountStats:
    """Statistics of per-image (predicted - true) count errors; MAPE divides by max(true, 1)"""
    pred = np.asarray(pred_counts, dtype=np.float64)
    true = np.asarray(true_counts, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise EvaluationError(f"Count lists differ in length: {len(pred)} predicted, {len(true)} true")
    if not len(pred):
        raise EvaluationError("Count statistics need at least one image")
    errors = pred - true
    mse = float(np.mean(errors ** 2))
    return CountStats(
        me=float(np.mean(errors)),
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(np.mean(np.abs(errors))),
        mape=float(np.mean(np.abs(errors) / np.maximum(true, 1.0)) * 100.0),
    )


def localization_rmse(distances) -> Tuple[float, bool]:
    """Root mean squared matched distance, and whether the set was empty"""
    distances = np.asarray(distances, dtype=np.float64).ravel()
    if not len(distances):
        return 0.0, True
    return float(np.sqrt(np.mean(distances ** 2))), False
