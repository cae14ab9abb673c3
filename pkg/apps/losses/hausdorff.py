# apps/losses/hausdorff.py
"""
Weighted Hausdorff distance between a probability map and a point set,
with a smooth-L1 count term.

Points are (x, y) = (column, row) of pixel centres; the map pixel in row r
and column c sits at (c, r).
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from apps.common.exceptions import ShapeError
from apps.diffcore import Variable, constant
from apps.diffcore import functional as F
from apps.losses.counting import check_probability_map


class WhdParams(BaseModel):
    """Weighted Hausdorff parameters for one image grid"""

    model_config = ConfigDict(frozen=True)

    image_height: int = Field(ge=1)
    image_width: int = Field(ge=1)
    alpha: float = Field(default=4.0, ge=1.0)
    epsilon: float = Field(default=1e-6, gt=0.0)
    d_max: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode='after')
    def _check_distance_bound(self) -> 'WhdParams':
        if self.d_max is None and self.image_height == 1 and self.image_width == 1:
            raise ValueError("d_max must be given for a 1x1 grid, whose diagonal is zero")
        return self

    @property
    def max_distance(self) -> float:
        if self.d_max is not None:
            return self.d_max
        return math.sqrt((self.image_height - 1) ** 2 + (self.image_width - 1) ** 2)


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(x, y) coordinates of every pixel centre in row-major order"""
    rows, cols = np.mgrid[0:height, 0:width]
    return np.stack([cols.ravel(), rows.ravel()], axis=1).astype(np.float64)


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return points


def whd_terms(p: Variable, points, params: WhdParams, s: Variable) -> Tuple[Variable, Variable, Variable]:
    """
    The three loss terms.

    term1 averages, over the soft detections, the distance to the nearest
    point. term2 averages, over the points, a weighted distance to the map
    that is small only where p is close to 1. term3 is smooth_l1(|Y| - Ĉ)
    with Ĉ = softplus(s).

    With no points, the nearest-point distance is d_max, and term2 and the
    true count are 0.
    """
    p, s = constant(p), constant(s)
    height, width = params.image_height, params.image_width
    if p.size != height * width or p.shape[-2:] != (height, width):
        raise ShapeError(f"Probability map of shape {p.shape} does not match grid {height}x{width}")
    if s.size != 1:
        raise ShapeError(f"Count signal must be a scalar, got shape {s.shape}")
    check_probability_map(p)

    points = _as_points(points)
    eps, d_max = params.epsilon, params.max_distance
    flat = F.reshape(p, (height * width,))

    if len(points):
        distances = cdist(pixel_grid(height, width), points)
        nearest = distances.min(axis=1)
    else:
        distances = None
        nearest = np.full(height * width, d_max)

    term1 = F.div(F.reduce_sum(F.mul(flat, nearest)), F.add(F.reduce_sum(flat), eps))

    if distances is not None:
        weighted = F.add(F.power(flat, params.alpha), eps / d_max)
        spread = F.broadcast_to(weighted, (len(points), height * width))
        ratios = F.div(distances.T + eps, spread)
        term2 = F.reduce_mean(F.reduce_min(ratios, axes=1))
    else:
        term2 = constant(0.0)

    c_hat = F.softplus(F.reshape(s, ()))
    term3 = F.smooth_l1(F.sub(float(len(points)), c_hat))
    return term1, term2, term3


def whd_loss(p: Variable, points, params: WhdParams, s: Variable) -> Variable:
    """Weighted Hausdorff distance plus the smooth-L1 count term for one image"""
    term1, term2, term3 = whd_terms(p, points, params, s)
    return F.add(F.add(term1, term2), term3)


def batch_whd_loss(probmap: Variable, point_sets: Sequence, params: WhdParams, s: Variable) -> Variable:
    """Mean of whd_loss over a batch; probmap is [N, 1, H, W] and s is [N]"""
    probmap, s = constant(probmap), constant(s)
    n = probmap.shape[0]
    if len(point_sets) != n or s.shape != (n,):
        raise ShapeError(
            f"Batch of {n} maps needs {n} point sets and signals, got {len(point_sets)} and {s.shape}"
        )
    losses: List[Variable] = [
        whd_loss(F.index_select(probmap, i), point_sets[i], params, F.index_select(s, i))
        for i in range(n)
    ]
    total = losses[0]
    for loss in losses[1:]:
        total = F.add(total, loss)
    return F.mul(total, 1.0 / n)
