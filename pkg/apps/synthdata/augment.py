# apps/synthdata/augment.py
import logging
from typing import Sequence, Tuple

import numpy as np

from apps.common.exceptions import ConfigurationError
from apps.synthdata.ground_truth import GroundTruth

logger = logging.getLogger(__name__)

AUGMENT_OPS = ('h-flip', 'v-flip', 'rot90', 'rot180', 'rot270', 'brightness-scale')


def _h_flip(image: np.ndarray, gt: GroundTruth) -> Tuple[np.ndarray, GroundTruth]:
    width = image.shape[1]
    centroids = gt.centroids.copy()
    centroids[:, 0] = width - 1 - centroids[:, 0]
    boxes = gt.boxes.copy()
    boxes[:, 0] = width - 1 - gt.boxes[:, 0] - gt.boxes[:, 2]
    orientations = None if gt.orientations is None else np.mod(np.pi - gt.orientations, np.pi)
    return image[:, ::-1], GroundTruth(centroids, boxes, orientations, gt.sizes, gt.filename)


def _v_flip(image: np.ndarray, gt: GroundTruth) -> Tuple[np.ndarray, GroundTruth]:
    height = image.shape[0]
    centroids = gt.centroids.copy()
    centroids[:, 1] = height - 1 - centroids[:, 1]
    boxes = gt.boxes.copy()
    boxes[:, 1] = height - 1 - gt.boxes[:, 1] - gt.boxes[:, 3]
    orientations = None if gt.orientations is None else np.mod(-gt.orientations, np.pi)
    return image[::-1], GroundTruth(centroids, boxes, orientations, gt.sizes, gt.filename)


def _rot90(image: np.ndarray, gt: GroundTruth) -> Tuple[np.ndarray, GroundTruth]:
    # counter-clockwise, as np.rot90: (x, y) -> (y, W - 1 - x)
    width = image.shape[1]
    x, y = gt.centroids[:, 0], gt.centroids[:, 1]
    centroids = np.column_stack([y, width - 1 - x])
    bx, by, bw, bh = gt.boxes.T
    boxes = np.column_stack([by, width - 1 - bx - bw, bh, bw])
    orientations = None if gt.orientations is None else np.mod(gt.orientations - np.pi / 2, np.pi)
    return np.rot90(image, k=1), GroundTruth(centroids, boxes, orientations, gt.sizes, gt.filename)


def scale_brightness(image: np.ndarray, factor: float) -> np.ndarray:
    if np.issubdtype(image.dtype, np.integer):
        return np.clip(np.rint(image.astype(np.float64) * factor), 0, 255).astype(image.dtype)
    return np.clip(image * factor, 0.0, 1.0)


def augment(image: np.ndarray, gt: GroundTruth, ops: Sequence[str],
            brightness: float = 0.9) -> Tuple[np.ndarray, GroundTruth]:
    """
    Apply ops left to right to an H x W x 3 image and its ground truth.

    Geometric ops move centroids, boxes and orientations with the pixels;
    brightness-scale multiplies intensities by `brightness` only.
    """
    unknown = [op for op in ops if op not in AUGMENT_OPS]
    if unknown:
        raise ConfigurationError(f"Unknown augmentation ops {unknown}; expected a subset of {AUGMENT_OPS}")
    for op in ops:
        if op == 'h-flip':
            image, gt = _h_flip(image, gt)
        elif op == 'v-flip':
            image, gt = _v_flip(image, gt)
        elif op == 'brightness-scale':
            image = scale_brightness(image, brightness)
        else:
            turns = {'rot90': 1, 'rot180': 2, 'rot270': 3}[op]
            for _ in range(turns):
                image, gt = _rot90(image, gt)
    return np.ascontiguousarray(image), gt
