# apps/metrics/matching.py
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from apps.common.exceptions import ConfigurationError


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)

    @property
    def distances(self) -> np.ndarray:
        return np.array([distance for _, _, distance in self.pairs], dtype=np.float64)


def _points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points.reshape(-1, 2) if points.size else np.zeros((0, 2))


def match_points(pred, gt, radius: float) -> MatchResult:
    """
    One-to-one matching of predictions to ground truth within `radius`:
    as many pairs as possible, then the smallest total distance.
    """
    if radius <= 0:
        raise ConfigurationError(f"Matching radius must be positive, got {radius}")
    pred, gt = _points(pred), _points(gt)
    if not len(pred) or not len(gt):
        return MatchResult(tp=0, fp=len(pred), fn=len(gt))

    distances = cdist(pred, gt)
    # a gated-out pair costs more than any complete set of gated pairs
    out_of_range = radius * (min(len(pred), len(gt)) + 1) + 1
    cost = np.where(distances <= radius, distances, out_of_range)
    rows, cols = linear_sum_assignment(cost)
    pairs = [
        (int(i), int(j), float(distances[i, j]))
        for i, j in zip(rows, cols) if distances[i, j] <= radius
    ]
    tp = len(pairs)
    return MatchResult(tp=tp, fp=len(pred) - tp, fn=len(gt) - tp, pairs=pairs)
