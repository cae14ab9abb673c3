# apps/proposals/services/detector_service.py
import logging
from typing import List, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from apps.common.utils import get_project_setting
from apps.common.validators import parse_int_list
from apps.networks.rcnn import RcnnNet, classify_patches
from apps.proposals.geometry import nms
from apps.proposals.patches import extract_patches
from apps.proposals.sampling import sliding_proposals

logger = logging.getLogger(__name__)

SHEEP_CLASS = 1


class DetectorParams(BaseModel):
    """Inference-time proposal grid and detection filtering"""

    model_config = ConfigDict(frozen=True)

    scales: List[int] = Field(default_factory=lambda: [8, 12])
    stride: int = Field(default=4, ge=1)
    score_threshold: float = Field(default=0.5, gt=0, lt=1)
    nms_threshold: float = Field(default=0.3, gt=0, le=1)
    batch_size: Optional[int] = Field(default=None, ge=1)

    @field_validator('scales', mode='before')
    @classmethod
    def _parse_scales(cls, value):
        scales = parse_int_list(value)
        if not scales or min(scales) < 1:
            raise ValueError(f"scales must be a non-empty list of positive sizes, got {value}")
        return scales

    @classmethod
    def paper(cls) -> 'DetectorParams':
        return cls(scales=[16, 24], stride=8)


class Detections(NamedTuple):
    boxes: np.ndarray
    scores: np.ndarray


class DetectorService:
    """Sliding proposals, patch classification, score threshold, then NMS"""

    def __init__(self, model: RcnnNet, params: DetectorParams):
        self.model = model
        self.params = params
        self.batch_size = params.batch_size or get_project_setting('DETECTOR_PATCH_BATCH_SIZE', 32)

    def score_proposals(self, image: np.ndarray, proposals: np.ndarray) -> np.ndarray:
        patch_size = self.model.config.patch_size
        scores = []
        for start in range(0, len(proposals), self.batch_size):
            patches = extract_patches(image, proposals[start:start + self.batch_size], patch_size)
            scores.append(classify_patches(self.model, patches)[:, SHEEP_CLASS])
        return np.concatenate(scores) if scores else np.zeros(0)

    def detect(self, image: np.ndarray) -> Detections:
        self.model.eval()
        proposals = sliding_proposals(image.shape[0], self.params.scales, self.params.stride)
        scores = self.score_proposals(image, proposals)
        candidates = np.flatnonzero(scores >= self.params.score_threshold)
        kept = candidates[nms(proposals[candidates], scores[candidates], self.params.nms_threshold)] \
            if len(candidates) else candidates
        logger.debug(
            f"{len(proposals)} proposals, {len(candidates)} above {self.params.score_threshold}, "
            f"{len(kept)} after NMS"
        )
        return Detections(proposals[kept], scores[kept])


def detect_boxes(model: RcnnNet, image: np.ndarray, params: DetectorParams) -> Detections:
    """Boxes and sheep-class scores for one H x W x 3 image; puts the model in eval mode"""
    return DetectorService(model, params).detect(image)
