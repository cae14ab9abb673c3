# apps/postprocess/extraction.py
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage
from sklearn.cluster import KMeans

from apps.common.exceptions import ShapeError
from apps.losses.counting import check_probability_map, rounded_count

logger = logging.getLogger(__name__)

OTSU_BINS = 256
EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


class ExtractionParams(BaseModel):
    """Probability map to centroid conversion"""

    model_config = ConfigDict(frozen=True)

    threshold_mode: Literal['otsu', 'fixed'] = 'otsu'
    fixed_threshold: float = Field(default=0.5, gt=0, lt=1)
    min_component_area: int = Field(default=2, ge=1)
    reconcile_with_count: bool = False


@dataclass
class Component:
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @property
    def area(self) -> int:
        return len(self.rows)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def mean_probability(self) -> float:
        return float(self.weights.mean())

    @property
    def centroid(self) -> Tuple[float, float]:
        """Probability-weighted (x, y); falls back to the plain mean for zero mass"""
        weights = self.weights if self.mass > 0 else np.ones_like(self.weights)
        return (float(np.average(self.cols, weights=weights)),
                float(np.average(self.rows, weights=weights)))

    @property
    def bounding_box(self) -> Tuple[int, int, int, int]:
        return int(self.cols.min()), int(self.rows.min()), int(self.cols.max()), int(self.rows.max())


def otsu_threshold(p: np.ndarray) -> float:
    """
    Otsu threshold over a 256-bin histogram of [0, 1]. Candidates are the
    interior bin edges; the first maximizer of the between-class variance
    wins. A constant map returns 0.5.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0 or p.max() == p.min():
        return 0.5
    counts, edges = np.histogram(p, bins=OTSU_BINS, range=(0.0, 1.0))
    sums, _ = np.histogram(p, bins=OTSU_BINS, range=(0.0, 1.0), weights=p)
    below_count = np.cumsum(counts)[:-1]
    below_sum = np.cumsum(sums)[:-1]
    above_count = p.size - below_count
    above_sum = sums.sum() - below_sum
    valid = (below_count > 0) & (above_count > 0)
    variance = np.zeros(OTSU_BINS - 1)
    mean_below = below_sum[valid] / below_count[valid]
    mean_above = above_sum[valid] / above_count[valid]
    variance[valid] = (below_count[valid] / p.size) * (above_count[valid] / p.size) * (mean_below - mean_above) ** 2
    return float(edges[1 + int(np.argmax(variance))])


def connected_components(binary: np.ndarray, p: Optional[np.ndarray] = None) -> List[Component]:
    """8-connected components in raster order, weighted by p (or 1)"""
    binary = np.asarray(binary, dtype=bool)
    weights = np.ones(binary.shape) if p is None else np.asarray(p, dtype=np.float64)
    labels, count = ndimage.label(binary, structure=EIGHT_CONNECTED)
    components = []
    for index, window in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = np.nonzero(labels[window] == index)
        rows, cols = rows + window[0].start, cols + window[1].start
        components.append(Component(rows, cols, weights[rows, cols]))
    return components


def _split(component: Component) -> Optional[Tuple[Component, Component]]:
    if component.area < 2:
        return None
    coordinates = np.column_stack([component.cols, component.rows]).astype(np.float64)
    weights = component.weights if component.mass > 0 else None
    labels = KMeans(n_clusters=2, n_init=10, random_state=0).fit(coordinates, sample_weight=weights).labels_
    if labels.min() == labels.max():
        return None
    return tuple(
        Component(component.rows[labels == k], component.cols[labels == k], component.weights[labels == k])
        for k in (0, 1)
    )


def reconcile_components(components: List[Component], target: int) -> List[Component]:
    """Split the largest components or keep the heaviest so the count approaches target"""
    components = list(components)
    if target > len(components):
        indivisible = set()
        while len(components) < target:
            candidates = [i for i in range(len(components)) if i not in indivisible]
            if not candidates:
                break
            largest = max(candidates, key=lambda i: (components[i].area, -i))
            halves = _split(components[largest])
            if halves is None:
                indivisible.add(largest)
                continue
            components[largest:largest + 1] = list(halves)
            indivisible = {i if i < largest else i + 1 for i in indivisible}
    elif target < len(components):
        order = sorted(range(len(components)), key=lambda i: (-components[i].mass, i))
        keep = sorted(order[:target])
        components = [components[i] for i in keep]
    return components


def extract_components(p: np.ndarray, params: ExtractionParams, c_hat: Optional[float] = None) -> List[Component]:
    p = check_probability_map(p)
    if p.ndim != 2:
        raise ShapeError(f"extract_centroids expects an H x W map, got {p.shape}")
    tau = otsu_threshold(p) if params.threshold_mode == 'otsu' else params.fixed_threshold
    components = [
        component for component in connected_components(p >= tau, p)
        if component.area >= params.min_component_area
    ]
    if params.reconcile_with_count and c_hat is not None:
        components = reconcile_components(components, rounded_count(c_hat))
    return components


def extract_centroids_with_scores(p: np.ndarray, params: ExtractionParams,
                                  c_hat: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Centroids [K, 2] and per-component mean probabilities [K]"""
    components = extract_components(p, params, c_hat)
    if not components:
        return np.zeros((0, 2)), np.zeros(0)
    points = np.array([component.centroid for component in components])
    scores = np.array([component.mean_probability for component in components])
    return points, scores


def extract_centroids(p: np.ndarray, params: ExtractionParams, c_hat: Optional[float] = None) -> np.ndarray:
    return extract_centroids_with_scores(p, params, c_hat)[0]
