# apps/synthdata/ground_truth.py
"""
Ground truth for rendered scenes.

Coordinates follow the pixel-centre convention: the pixel in row r and
column c sits at (x, y) = (c, r). Boxes are (x, y, w, h) with (x, y) the
top-left corner, so the box centre is (x + w / 2, y + h / 2).
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from apps.common.exceptions import ShapeError


def ellipse_extents(length: float, width: float, theta: float) -> Tuple[float, float]:
    """Half-extents of the axis-aligned box tight around a rotated ellipse"""
    a, b = length / 2.0, width / 2.0
    ex = np.sqrt((a * np.cos(theta)) ** 2 + (b * np.sin(theta)) ** 2)
    ey = np.sqrt((a * np.sin(theta)) ** 2 + (b * np.cos(theta)) ** 2)
    return float(ex), float(ey)


def ellipse_radius(shape: Tuple[int, int], center: Tuple[float, float], length: float, width: float,
                   theta: float) -> np.ndarray:
    """Normalized elliptical radius at every pixel centre; 1 on the ellipse boundary"""
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    dx, dy = cols - center[0], rows - center[1]
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return np.sqrt((u / (length / 2.0)) ** 2 + (v / (width / 2.0)) ** 2)


def ellipse_coverage(shape: Tuple[int, int], center: Tuple[float, float], length: float, width: float,
                     theta: float, softness: float = 0.35) -> np.ndarray:
    """Soft-edged coverage in [0, 1]: 1 in the core, fading to 0 at the boundary"""
    radius = ellipse_radius(shape, center, length, width, theta)
    return np.clip((1.0 - radius) / softness, 0.0, 1.0)


@dataclass
class GroundTruth:
    centroids: np.ndarray
    boxes: np.ndarray
    orientations: Optional[np.ndarray] = None
    sizes: Optional[np.ndarray] = None
    filename: str = field(default='')

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64).reshape(-1, 2)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if len(self.centroids) != len(self.boxes):
            raise ShapeError(
                f"Ground truth has {len(self.centroids)} centroids but {len(self.boxes)} boxes"
            )
        if self.orientations is not None:
            self.orientations = np.asarray(self.orientations, dtype=np.float64).reshape(-1)
        if self.sizes is not None:
            self.sizes = np.asarray(self.sizes, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def empty(cls, filename: str = '') -> 'GroundTruth':
        return cls(np.zeros((0, 2)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 2)), filename)

    @property
    def count(self) -> int:
        return len(self.centroids)

    def box_centers(self) -> np.ndarray:
        return self.boxes[:, :2] + self.boxes[:, 2:] / 2.0
