# apps/synthdata/services/scene_renderer.py
import logging
from typing import List, Tuple

import cv2
import numpy as np

from apps.common.exceptions import SceneRenderError
from apps.common.utils import get_project_setting
from apps.synthdata.config import SceneConfig
from apps.synthdata.ground_truth import GroundTruth, ellipse_coverage, ellipse_extents

logger = logging.getLogger(__name__)

SHEEP_TINT = np.array([1.0, 0.98, 0.92])
FENCE_TINT = np.array([0.95, 0.93, 0.88])


class SceneRenderer:
    """Renders scenes as a pure function of (config, index)"""

    def __init__(self, config: SceneConfig):
        self.config = config
        self.max_retries = get_project_setting('PLACEMENT_RETRIES', 200)

    def render(self, index: int) -> Tuple[np.ndarray, GroundTruth]:
        config = self.config
        size = config.image_size
        rng = np.random.default_rng([config.seed, index])

        image = self._grass(rng)
        count = int(rng.integers(config.count_range[0], config.count_range[1] + 1))
        fence = self._fence_mask(rng)
        if fence.any():
            image[fence] = config.fence_brightness * FENCE_TINT

        sheep = self._place(rng, count, fence, index)

        for cx, cy, length, width, theta, _ in sheep:
            shadow = ellipse_coverage(
                (size, size), (cx + config.shadow_offset, cy + config.shadow_offset), length, width, theta,
            )
            image *= (1.0 - config.shadow_alpha * shadow)[..., None]

        coverages = []
        for cx, cy, length, width, theta, brightness in sheep:
            coverage = ellipse_coverage((size, size), (cx, cy), length, width, theta)
            coverages.append(coverage)
            colour = brightness * SHEEP_TINT
            image = image * (1.0 - coverage[..., None]) + colour * coverage[..., None]

        image *= rng.uniform(*config.illumination_range)
        image = np.clip(image, 0.0, 1.0)
        self._enforce_contrast(image, coverages)

        raster = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
        gt = self._ground_truth(sheep)
        return raster, gt

    def _grass(self, rng: np.random.Generator) -> np.ndarray:
        config = self.config
        size = config.image_size
        noise = np.zeros((size, size), dtype=np.float32)
        for octave in range(config.grass_octaves):
            cells = min(size, 2 ** (octave + 2))
            coarse = rng.uniform(-1.0, 1.0, size=(cells, cells)).astype(np.float32)
            noise += cv2.resize(coarse, (size, size), interpolation=cv2.INTER_CUBIC) / 2 ** octave
        fine = rng.normal(0.0, 0.3, size=(size, size)).astype(np.float32)

        hue = rng.uniform(*config.grass_hue_range)
        hsv = np.empty((size, size, 3), dtype=np.float32)
        hsv[..., 0] = np.mod(hue + 10.0 * noise, 360.0)
        hsv[..., 1] = np.clip(config.grass_saturation + 0.5 * config.grass_amplitude * noise, 0.0, 1.0)
        hsv[..., 2] = np.clip(config.grass_value + config.grass_amplitude * (noise + fine), 0.0, 1.0)
        return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB).astype(np.float64)

    def _fence_mask(self, rng: np.random.Generator) -> np.ndarray:
        config = self.config
        size = config.image_size
        mask = np.zeros((size, size), dtype=np.uint8)
        if rng.uniform() >= config.fence_probability:
            return mask.astype(bool)
        thickness = int(rng.integers(1, 4))
        a, b = rng.uniform(0, size - 1, size=2)
        if rng.uniform() < 0.5:
            start, end = (0, int(round(a))), (size - 1, int(round(b)))
        else:
            start, end = (int(round(a)), 0), (int(round(b)), size - 1)
        cv2.line(mask, start, end, color=1, thickness=thickness)
        return mask.astype(bool)

    def _place(self, rng: np.random.Generator, count: int, fence: np.ndarray,
               index: int) -> List[Tuple[float, float, float, float, float, float]]:
        config = self.config
        size = config.image_size
        placed = []
        boxes = []
        for number in range(count):
            for _ in range(self.max_retries):
                length = rng.uniform(*config.sheep_length_range)
                width = min(rng.uniform(*config.sheep_width_range), length)
                theta = rng.uniform(0.0, np.pi)
                ex, ey = ellipse_extents(length, width, theta)
                cx = rng.uniform(ex - 0.5, size - 0.5 - ex)
                cy = rng.uniform(ey - 0.5, size - 0.5 - ey)
                box = (cx - ex, cy - ey, cx + ex, cy + ey)
                if self._touches_fence(box, fence) or not self._separated(box, boxes):
                    continue
                brightness = rng.uniform(*config.brightness_range)
                placed.append((cx, cy, length, width, theta, brightness))
                boxes.append(box)
                break
            else:
                logger.warning(f"Placement failed for scene {index} at sheep {number + 1} of {count}")
                raise SceneRenderError(
                    f"Could not place sheep {number + 1} of {count} in scene {index} after "
                    f"{self.max_retries} attempts; lower count_range or min_separation"
                )
        return placed

    @staticmethod
    def _touches_fence(box: Tuple[float, float, float, float], fence: np.ndarray) -> bool:
        size = fence.shape[0]
        x0 = max(0, int(np.floor(box[0] - 1)))
        y0 = max(0, int(np.floor(box[1] - 1)))
        x1 = min(size - 1, int(np.ceil(box[2] + 1)))
        y1 = min(size - 1, int(np.ceil(box[3] + 1)))
        return bool(fence[y0:y1 + 1, x0:x1 + 1].any())

    def _separated(self, box: Tuple[float, float, float, float], others: List[Tuple[float, ...]]) -> bool:
        if self.config.allow_overlap:
            return True
        for other in others:
            gap = max(other[0] - box[2], box[0] - other[2], other[1] - box[3], box[1] - other[3])
            if gap < self.config.min_separation:
                return False
        return True

    def _enforce_contrast(self, image: np.ndarray, coverages: List[np.ndarray]) -> None:
        """Brighten sheep whose mean falls short of the background mean plus the margin"""
        if not coverages:
            return
        occupied = np.zeros(image.shape[:2], dtype=bool)
        for coverage in coverages:
            occupied |= coverage > 0
        if occupied.all():
            return
        target = image.mean(axis=2)[~occupied].mean() + self.config.contrast_margin + 0.01
        for coverage in coverages:
            inside = coverage > 0
            if not inside.any():
                continue
            weight = coverage[inside] / coverage[inside].mean()
            for _ in range(8):
                shortfall = target - image[inside].mean()
                if shortfall <= 0:
                    break
                image[inside] = np.clip(image[inside] + shortfall * weight[:, None], 0.0, 1.0)

    @staticmethod
    def _ground_truth(sheep: List[Tuple[float, ...]]) -> GroundTruth:
        if not sheep:
            return GroundTruth.empty()
        centroids, boxes, orientations, sizes = [], [], [], []
        for cx, cy, length, width, theta, _ in sheep:
            ex, ey = ellipse_extents(length, width, theta)
            centroids.append((cx, cy))
            boxes.append((cx - ex, cy - ey, 2 * ex, 2 * ey))
            orientations.append(theta)
            sizes.append((length, width))
        return GroundTruth(np.array(centroids), np.array(boxes), np.array(orientations), np.array(sizes))


def render_scene(config: SceneConfig, index: int) -> Tuple[np.ndarray, GroundTruth]:
    """8-bit RGB raster [S, S, 3] and ground truth for scene `index`"""
    return SceneRenderer(config).render(index)
