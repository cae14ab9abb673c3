# apps/postprocess/services/prediction_service.py
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from apps.common.utils import PathLike, get_project_setting
from apps.networks.registry import Model, is_point_detector
from apps.networks.unet import unet_forward
from apps.postprocess.extraction import ExtractionParams, extract_centroids_with_scores
from apps.proposals.geometry import box_center
from apps.proposals.services.detector_service import DetectorParams, detect_boxes
from apps.synthdata.services.dataset_service import Sample, to_batch

logger = logging.getLogger(__name__)

PRED_POINTS_NAME = 'pred_points.csv'
DETECTIONS_NAME = 'detections.csv'
PRED_POINT_COLUMNS = ['filename', 'x', 'y', 'score']
DETECTION_COLUMNS = ['filename', 'x', 'y', 'w', 'h', 'score']


@dataclass
class ImagePrediction:
    filename: str
    points: np.ndarray
    scores: np.ndarray
    boxes: Optional[np.ndarray] = None
    c_hat: Optional[float] = None

    @property
    def count(self) -> int:
        return len(self.points)


class PredictionService:
    """Runs a trained model over samples and converts outputs to points"""

    def __init__(self, model: Model, extraction: Optional[ExtractionParams] = None,
                 detector: Optional[DetectorParams] = None, threads: int = 1):
        self.model = model.eval()
        self.extraction = extraction or ExtractionParams()
        self.detector = detector or DetectorParams()
        self.threads = max(1, threads)
        self.batch_size = get_project_setting('INFERENCE_BATCH_SIZE', 8)

    @property
    def outputs_points(self) -> bool:
        return is_point_detector(self.model)

    def predict(self, samples: Sequence[Sample]) -> List[ImagePrediction]:
        if self.outputs_points:
            predictions = self._predict_unet(samples)
        else:
            predictions = Parallel(n_jobs=self.threads, prefer='threads')(
                delayed(self._predict_boxes)(sample) for sample in tqdm(samples, desc='detect', unit='img')
            )
        logger.info(f"Predicted {sum(p.count for p in predictions)} objects over {len(predictions)} images")
        return predictions

    def predict_images(self, images: np.ndarray) -> List[ImagePrediction]:
        """Predictions for raw H x W x 3 images; used by the timing harness"""
        samples = [Sample('', image, None) for image in images]
        return self.predict(samples)

    def _predict_unet(self, samples: Sequence[Sample]) -> List[ImagePrediction]:
        predictions = []
        for start in tqdm(range(0, len(samples), self.batch_size), desc='infer', unit='batch',
                          disable=len(samples) <= self.batch_size):
            chunk = samples[start:start + self.batch_size]
            out = unet_forward(self.model, to_batch([sample.image for sample in chunk]))
            maps = out.probmap.value[:, 0]
            extracted = Parallel(n_jobs=self.threads, prefer='threads')(
                delayed(extract_centroids_with_scores)(maps[i], self.extraction, float(out.c_hat[i]))
                for i in range(len(chunk))
            )
            for sample, (points, scores), c_hat in zip(chunk, extracted, out.c_hat):
                predictions.append(ImagePrediction(sample.filename, points, scores, c_hat=float(c_hat)))
        return predictions

    def _predict_boxes(self, sample: Sample) -> ImagePrediction:
        detections = detect_boxes(self.model, sample.image, self.detector)
        return ImagePrediction(sample.filename, box_center(detections.boxes), detections.scores, detections.boxes)

    @staticmethod
    def write_pred_points(predictions: Sequence[ImagePrediction], path: PathLike) -> Path:
        rows = [
            (prediction.filename, x, y, score)
            for prediction in predictions
            for (x, y), score in zip(prediction.points, prediction.scores)
        ]
        path = Path(path)
        pd.DataFrame(rows, columns=PRED_POINT_COLUMNS).to_csv(path, index=False, float_format='%.3f')
        return path

    @staticmethod
    def write_detections(predictions: Sequence[ImagePrediction], path: PathLike) -> Path:
        rows = [
            (prediction.filename, *box, score)
            for prediction in predictions
            for box, score in zip(prediction.boxes, prediction.scores)
        ]
        path = Path(path)
        pd.DataFrame(rows, columns=DETECTION_COLUMNS).to_csv(path, index=False, float_format='%.3f')
        return path
