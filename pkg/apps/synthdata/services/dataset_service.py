# apps/synthdata/services/dataset_service.py
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from PIL import Image, UnidentifiedImageError
from tqdm import tqdm

from apps.common.exceptions import DatasetError
from apps.common.utils import PathLike, files_sha256
from apps.common.validators import validate_split_fractions
from apps.synthdata.config import SceneConfig
from apps.synthdata.ground_truth import GroundTruth
from apps.synthdata.services.scene_renderer import render_scene

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
MANIFEST_NAME = 'manifest.csv'
POINTS_NAME = 'points.csv'
BOXES_NAME = 'boxes.csv'
MANIFEST_COLUMNS = ['filename', 'split', 'count', 'seed', 'index']
POINT_COLUMNS = ['filename', 'x', 'y']
BOX_COLUMNS = ['filename', 'x', 'y', 'w', 'h']


@dataclass
class Sample:
    filename: str
    image: np.ndarray
    gt: GroundTruth


def image_filename(index: int) -> str:
    return f'img_{index:06d}.png'


def split_sizes(total: int, fractions: Sequence[float]) -> Dict[str, int]:
    """Validation and test sizes are floored; the remainder goes to training"""
    _, val_fraction, test_fraction = validate_split_fractions(fractions)
    val = int(math.floor(total * val_fraction + 1e-9))
    test = int(math.floor(total * test_fraction + 1e-9))
    return {'train': total - val - test, 'val': val, 'test': test}


def to_batch(images: Sequence[np.ndarray]) -> np.ndarray:
    """Stack H x W x 3 images into an [N, 3, H, W] network batch"""
    if not len(images):
        return np.zeros((0, 3, 0, 0))
    return np.stack([np.transpose(image, (2, 0, 1)) for image in images])


class DatasetService:
    """Writes and reads train/val/test directories of rendered scenes"""

    def __init__(self, config: SceneConfig, threads: int = 1):
        self.config = config
        self.threads = max(1, threads)

    def make_dataset(self, total: int, splits: Sequence[float], out_dir: PathLike) -> pd.DataFrame:
        if total < 0:
            raise DatasetError(f"Dataset size must be non-negative, got {total}")
        out_dir = Path(out_dir)
        sizes = split_sizes(total, splits)
        logger.info(f"Generating {total} scenes into {out_dir}: " + ' '.join(f'{k}={v}' for k, v in sizes.items()))

        try:
            for split in SPLITS:
                (out_dir / split).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DatasetError(f"Cannot create dataset directory {out_dir}: {exc}") from exc

        rendered = Parallel(n_jobs=self.threads)(
            delayed(render_scene)(self.config, index)
            for index in tqdm(range(total), desc='render', unit='img', disable=total < 2)
        )

        manifest_rows, start = [], 0
        for split in SPLITS:
            indices = range(start, start + sizes[split])
            start += sizes[split]
            point_rows, box_rows = [], []
            for index in indices:
                raster, gt = rendered[index]
                filename = image_filename(index)
                self._write_image(out_dir / split / filename, raster)
                point_rows.extend((filename, x, y) for x, y in gt.centroids)
                box_rows.extend((filename, *box) for box in gt.boxes)
                manifest_rows.append((filename, split, gt.count, self.config.seed, index))
            self._write_csv(pd.DataFrame(point_rows, columns=POINT_COLUMNS), out_dir / split / POINTS_NAME)
            self._write_csv(pd.DataFrame(box_rows, columns=BOX_COLUMNS), out_dir / split / BOXES_NAME)

        manifest = pd.DataFrame(manifest_rows, columns=MANIFEST_COLUMNS)
        self._write_csv(manifest, out_dir / MANIFEST_NAME)
        logger.info(f"Dataset written to {out_dir} with {int(manifest['count'].sum())} objects")
        return manifest

    @staticmethod
    def _write_image(path: Path, raster: np.ndarray) -> None:
        try:
            Image.fromarray(raster).save(path, format='PNG')
        except OSError as exc:
            raise DatasetError(f"Cannot write image {path}: {exc}") from exc

    @staticmethod
    def _write_csv(frame: pd.DataFrame, path: Path) -> None:
        try:
            frame.to_csv(path, index=False, float_format='%.3f')
        except OSError as exc:
            raise DatasetError(f"Cannot write {path}: {exc}") from exc


def read_manifest(data_dir: PathLike) -> pd.DataFrame:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.is_file():
        raise DatasetError(f"Dataset manifest {path} not found")
    try:
        manifest = pd.read_csv(path, dtype={'filename': str, 'split': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetError(f"Corrupt manifest {path}: {exc}") from exc
    missing = [column for column in MANIFEST_COLUMNS if column not in manifest.columns]
    if missing:
        raise DatasetError(f"Manifest {path} lacks columns {missing}")
    return manifest


def _read_table(path: Path, columns: List[str]) -> pd.DataFrame:
    if not path.is_file():
        raise DatasetError(f"Ground-truth file {path} not found")
    try:
        frame = pd.read_csv(path, dtype={'filename': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetError(f"Corrupt ground-truth file {path}: {exc}") from exc
    if list(frame.columns) != columns:
        raise DatasetError(f"Ground-truth file {path} has columns {list(frame.columns)}, expected {columns}")
    return frame


def read_split_ground_truth(data_dir: PathLike, split: str) -> Tuple[pd.DataFrame, Dict[str, GroundTruth]]:
    """Manifest rows of one split and ground truth keyed by filename"""
    if split not in SPLITS:
        raise DatasetError(f"Unknown split '{split}', expected one of {SPLITS}")
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    rows = manifest[manifest['split'] == split]
    points = _read_table(data_dir / split / POINTS_NAME, POINT_COLUMNS)
    boxes = _read_table(data_dir / split / BOXES_NAME, BOX_COLUMNS)
    point_groups = {name: group[['x', 'y']].to_numpy(float) for name, group in points.groupby('filename', sort=False)}
    box_groups = {name: group[['x', 'y', 'w', 'h']].to_numpy(float) for name, group in boxes.groupby('filename', sort=False)}

    truths = {}
    for filename, count in zip(rows['filename'], rows['count']):
        centroids = point_groups.get(filename, np.zeros((0, 2)))
        frame_boxes = box_groups.get(filename, np.zeros((0, 4)))
        if len(centroids) != count or len(frame_boxes) != count:
            raise DatasetError(
                f"{split}/{filename}: manifest lists {count} objects but found "
                f"{len(centroids)} points and {len(frame_boxes)} boxes"
            )
        truths[filename] = GroundTruth(centroids, frame_boxes, filename=filename)
    return rows, truths


def load_image(path: Path) -> np.ndarray:
    """H x W x 3 float image in [0, 1]"""
    try:
        with Image.open(path) as handle:
            raster = np.asarray(handle.convert('RGB'), dtype=np.float64)
    except FileNotFoundError as exc:
        raise DatasetError(f"Image {path} not found") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetError(f"Corrupt image {path}: {exc}") from exc
    return raster / 255.0


def load_dataset(data_dir: PathLike, split: str) -> List[Sample]:
    """Samples of one split in manifest order"""
    data_dir = Path(data_dir)
    rows, truths = read_split_ground_truth(data_dir, split)
    samples = [
        Sample(filename, load_image(data_dir / split / filename), truths[filename])
        for filename in rows['filename']
    ]
    logger.debug(f"Loaded {len(samples)} {split} samples from {data_dir}")
    return samples


def dataset_checksum(data_dir: PathLike) -> str:
    """SHA-256 over the manifest, per-split tables and images in manifest order"""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    relative = [MANIFEST_NAME]
    for split in SPLITS:
        relative += [f'{split}/{POINTS_NAME}', f'{split}/{BOXES_NAME}']
        relative += [f'{split}/{name}' for name in manifest.loc[manifest['split'] == split, 'filename']]
    try:
        return files_sha256(data_dir, relative)
    except FileNotFoundError as exc:
        raise DatasetError(f"Dataset file missing: {exc.filename}") from exc
