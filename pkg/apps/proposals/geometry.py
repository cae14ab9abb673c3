# apps/proposals/geometry.py
"""
Axis-aligned boxes as (x, y, w, h) rows, (x, y) the top-left corner in the
pixel-centre frame: an S x S image spans [-0.5, S - 0.5] on both axes.
"""
from typing import List, NamedTuple, Sequence

import numpy as np

from apps.common.exceptions import BoxError, ShapeError


class Box(NamedTuple):
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self):
        return self.x + self.w / 2.0, self.y + self.h / 2.0


def as_boxes(boxes) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.size == 0:
        return np.zeros((0, 4))
    boxes = boxes.reshape(-1, 4)
    if np.any(boxes[:, 2:] <= 0):
        raise BoxError("Boxes need positive width and height")
    return boxes


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two boxes"""
    return float(iou_matrix([a], [b])[0, 0])


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU [len(a), len(b)]"""
    a, b = as_boxes(a), as_boxes(b)
    if not len(a) or not len(b):
        return np.zeros((len(a), len(b)))
    ax0, ay0 = a[:, 0:1], a[:, 1:2]
    ax1, ay1 = ax0 + a[:, 2:3], ay0 + a[:, 3:4]
    bx0, by0 = b[:, 0], b[:, 1]
    bx1, by1 = bx0 + b[:, 2], by0 + b[:, 3]
    inter_w = np.clip(np.minimum(ax1, bx1) - np.maximum(ax0, bx0), 0.0, None)
    inter_h = np.clip(np.minimum(ay1, by1) - np.maximum(ay0, by0), 0.0, None)
    inter = inter_w * inter_h
    union = a[:, 2:3] * a[:, 3:4] + b[:, 2] * b[:, 3] - inter
    return np.clip(inter / union, 0.0, 1.0)


def clip_boxes(boxes, image_size: int) -> np.ndarray:
    """Clip to the image; boxes left with no area get zero width or height"""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    low, high = -0.5, image_size - 0.5
    x0 = np.clip(boxes[:, 0], low, high)
    y0 = np.clip(boxes[:, 1], low, high)
    x1 = np.clip(boxes[:, 0] + boxes[:, 2], low, high)
    y1 = np.clip(boxes[:, 1] + boxes[:, 3], low, high)
    return np.column_stack([x0, y0, x1 - x0, y1 - y0])


def box_center(boxes) -> np.ndarray:
    """Box centres as (x, y) points"""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    return boxes[:, :2] + boxes[:, 2:] / 2.0


def nms(boxes, scores, iou_threshold: float) -> List[int]:
    """
    Greedy non-maximum suppression. Boxes are visited by descending score,
    ties broken by lower index; a box is dropped when its IoU with any kept
    box exceeds the threshold.
    """
    boxes = as_boxes(boxes)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(boxes) != len(scores):
        raise ShapeError(f"nms got {len(boxes)} boxes but {len(scores)} scores")
    order = list(np.lexsort((np.arange(len(scores)), -scores)))
    keep = []
    while order:
        current = order.pop(0)
        keep.append(int(current))
        if not order:
            break
        overlaps = iou_matrix(boxes[current:current + 1], boxes[order])[0]
        order = [index for index, overlap in zip(order, overlaps) if overlap <= iou_threshold]
    return keep
