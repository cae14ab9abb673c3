# apps/proposals/sampling.py
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from apps.common.exceptions import ConfigurationError
from apps.proposals.geometry import Box, as_boxes, clip_boxes, iou_matrix

logger = logging.getLogger(__name__)

POSITIVE = 'positive'
NEGATIVE = 'negative'
IGNORE = 'ignore'

POSITIVE_WINDOW = (0.5, 1.0)
NEGATIVE_WINDOW = (0.1, 0.2)
JITTER_SCALE = (0.7, 1.3)
RANDOM_SIZE_FACTOR = (0.5, 2.0)


@dataclass(frozen=True)
class LabeledProposal:
    box: Box
    label: str
    matched_gt: Optional[int]
    iou: float


def label_for_iou(overlap: float) -> str:
    """Closed windows: [0.5, 1] positive, [0.1, 0.2] negative, anything else ignored"""
    if POSITIVE_WINDOW[0] <= overlap <= POSITIVE_WINDOW[1]:
        return POSITIVE
    if NEGATIVE_WINDOW[0] <= overlap <= NEGATIVE_WINDOW[1]:
        return NEGATIVE
    return IGNORE


def label_proposals(boxes, gt_boxes) -> List[LabeledProposal]:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    overlaps = iou_matrix(boxes, gt_boxes)
    labeled = []
    for row, box in enumerate(boxes):
        if overlaps.shape[1]:
            best = int(np.argmax(overlaps[row]))
            value = float(overlaps[row, best])
        else:
            best, value = None, 0.0
        label = label_for_iou(value)
        labeled.append(LabeledProposal(Box(*box), label, best if value > 0 else None, value))
    return labeled


def generate_train_proposals(gt_boxes, image_size: int, n: int = 1000, positive_fraction: float = 0.25,
                             seed: int = 0) -> List[LabeledProposal]:
    """
    Exactly n labeled proposals: the ground-truth boxes themselves, jittered
    copies of them (scale in [0.7, 1.3], shift up to half a box), then
    uniformly placed random boxes sized around the median object.
    """
    if n < 1:
        raise ConfigurationError(f"Proposal count must be at least 1, got {n}")
    if not 0.0 <= positive_fraction <= 1.0:
        raise ConfigurationError(f"positive_fraction must lie in [0, 1], got {positive_fraction}")
    gt = as_boxes(gt_boxes)
    rng = np.random.default_rng(seed)
    proposals = []

    if len(gt):
        proposals.extend(gt[:n])
        jittered = max(0, min(n, int(round(n * positive_fraction))) - len(proposals))
        while jittered > 0:
            source = gt[rng.integers(len(gt))]
            scale = rng.uniform(*JITTER_SCALE, size=2)
            shift = rng.uniform(-0.5, 0.5, size=2) * source[2:]
            size = source[2:] * scale
            center = source[:2] + source[2:] / 2.0 + shift
            box = clip_boxes(np.concatenate([center - size / 2.0, size]), image_size)[0]
            if box[2] > 0 and box[3] > 0:
                proposals.append(box)
                jittered -= 1

    base = np.median(gt[:, 2:], axis=0) if len(gt) else np.full(2, image_size / 8.0)
    while len(proposals) < n:
        size = np.minimum(base * rng.uniform(*RANDOM_SIZE_FACTOR, size=2), image_size)
        origin = rng.uniform(-0.5, image_size - 0.5 - size)
        proposals.append(np.concatenate([origin, size]))

    labeled = label_proposals(np.array(proposals), gt)
    logger.debug(
        f"Generated {n} proposals: "
        f"{sum(p.label == POSITIVE for p in labeled)} positive, "
        f"{sum(p.label == NEGATIVE for p in labeled)} negative"
    )
    return labeled


def sliding_proposals(image_size: int, scales: Sequence[int], stride: int) -> np.ndarray:
    """Square boxes of each scale on a stride grid, row-major per scale"""
    if stride < 1:
        raise ConfigurationError(f"Stride must be at least 1, got {stride}")
    boxes = []
    for scale in scales:
        if scale < 1 or scale > image_size:
            raise ConfigurationError(f"Proposal scale {scale} does not fit a {image_size}px image")
        offsets = -0.5 + np.arange((image_size - scale) // stride + 1) * stride
        ys, xs = np.meshgrid(offsets, offsets, indexing='ij')
        grid = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, scale), np.full(xs.size, scale)])
        boxes.append(grid)
    if not boxes:
        return np.zeros((0, 4))
    return clip_boxes(np.concatenate(boxes).astype(np.float64), image_size)
