# apps/cli/overlays.py
"""
Overlay images for visual inspection of predictions: ground truth as
green circles, UNet centroids as red crosses, classifier detections as
red rectangles.
"""
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from PIL import Image

from apps.common.utils import get_project_setting
from apps.synthdata.ground_truth import GroundTruth

GT_COLOR = (0, 200, 0)
PRED_COLOR = (230, 0, 0)


def _scaled(x: float, y: float, scale: int):
    return int(round((x + 0.5) * scale)), int(round((y + 0.5) * scale))


def render_overlay(image: np.ndarray, gt: Optional[GroundTruth], points: Optional[np.ndarray] = None,
                   boxes: Optional[np.ndarray] = None, radius: float = 4.0, scale: Optional[int] = None) -> np.ndarray:
    """Upscaled 8-bit RGB raster with annotations drawn on top"""
    scale = scale or get_project_setting('OVERLAY_SCALE', 4)
    raster = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    height, width = raster.shape[:2]
    canvas = np.ascontiguousarray(
        cv2.resize(raster, (width * scale, height * scale), interpolation=cv2.INTER_NEAREST)
    )

    if gt is not None:
        for x, y in gt.centroids:
            cv2.circle(canvas, _scaled(x, y, scale), int(round(radius * scale)), GT_COLOR, 1, cv2.LINE_AA)
    if boxes is not None:
        for x, y, w, h in boxes:
            top_left = _scaled(x, y, scale)
            right, bottom = _scaled(x + w, y + h, scale)
            bottom_right = (right - 1, bottom - 1)
            cv2.rectangle(canvas, top_left, bottom_right, PRED_COLOR, 1)
    elif points is not None:
        for x, y in points:
            cv2.drawMarker(canvas, _scaled(x, y, scale), PRED_COLOR, cv2.MARKER_CROSS, 2 * scale + 1, 1)
    return canvas


def write_overlay(path: Path, canvas: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(path, format='PNG')
    return path
