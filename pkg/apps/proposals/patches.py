# apps/proposals/patches.py
import numpy as np
from scipy.ndimage import map_coordinates

from apps.common.exceptions import BoxError, ShapeError


def extract_patch(image: np.ndarray, box, patch_size: int) -> np.ndarray:
    """
    Bilinear warp of the box contents of an H x W x 3 image to [3, S, S].

    Output pixel j samples the source at x + (j + 0.5) * w / S, so the
    whole-image box (-0.5, -0.5, W, H) with S = W is the identity.
    Samples beyond the border repeat the edge pixel.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"extract_patch expects an H x W x 3 image, got {image.shape}")
    x, y, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise BoxError(f"Cannot warp zero-area box {(x, y, w, h)}")
    height, width = image.shape[:2]
    if x >= width - 0.5 or y >= height - 0.5 or x + w <= -0.5 or y + h <= -0.5:
        raise BoxError(f"Box {(x, y, w, h)} does not overlap the {width}x{height} image")

    steps = np.arange(patch_size) + 0.5
    cols = x + steps * w / patch_size
    rows = y + steps * h / patch_size
    grid_rows, grid_cols = np.meshgrid(rows, cols, indexing='ij')
    coordinates = np.stack([grid_rows, grid_cols])
    return np.stack([
        map_coordinates(image[..., channel], coordinates, order=1, mode='nearest')
        for channel in range(3)
    ])


def extract_patches(image: np.ndarray, boxes, patch_size: int) -> np.ndarray:
    """[N, 3, S, S] patches for N boxes"""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if not len(boxes):
        return np.zeros((0, 3, patch_size, patch_size))
    return np.stack([extract_patch(image, box, patch_size) for box in boxes])
