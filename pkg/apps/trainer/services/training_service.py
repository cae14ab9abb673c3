# apps/trainer/services/training_service.py
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from apps.common.exceptions import ConfigurationError, TrainingDivergedError
from apps.common.utils import get_project_setting
from apps.diffcore import Tape, backward
from apps.losses.classification import cross_entropy
from apps.losses.hausdorff import batch_whd_loss
from apps.metrics.services.evaluation_service import EvaluationService
from apps.networks.registry import Model
from apps.networks.unet import unet_forward
from apps.postprocess.extraction import ExtractionParams
from apps.postprocess.services.prediction_service import PredictionService
from apps.proposals.patches import extract_patches
from apps.proposals.sampling import NEGATIVE, POSITIVE, generate_train_proposals
from apps.proposals.services.detector_service import SHEEP_CLASS, DetectorParams
from apps.synthdata.augment import AUGMENT_OPS, augment
from apps.synthdata.services.dataset_service import Sample, to_batch
from apps.trainer.checkpoints import BEST_NAME, LATEST_NAME, checkpoint_save, load_into
from apps.trainer.config import LOSS_FOR_MODEL, TrainConfig
from apps.trainer.optim import SGDMomentum

logger = logging.getLogger(__name__)

HISTORY_NAME = 'history.csv'
HISTORY_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'val_f1']

# seed-sequence stream tags
TRAIN_STREAM, VALIDATION_STREAM, AUGMENT_STREAM = 0, 1, 2


@dataclass
class Validation:
    epoch: int
    loss: float
    f1: float


@dataclass
class TrainHistory:
    train_losses: List[float] = field(default_factory=list)
    validations: List[Validation] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    def to_frame(self) -> pd.DataFrame:
        by_epoch = {v.epoch: v for v in self.validations}
        rows = []
        for index, loss in enumerate(self.train_losses):
            epoch = index + 1
            validation = by_epoch.get(epoch)
            rows.append((
                epoch, loss,
                validation.loss if validation else math.nan,
                validation.f1 if validation else math.nan,
            ))
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def _seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


class TrainingService:
    """
    Owns one model for a training run: seeded shuffling, mini-batch SGD
    with momentum, validation at the configured cadence and checkpoints.
    """

    def __init__(self, model: Model, config: TrainConfig, extraction: Optional[ExtractionParams] = None,
                 detector: Optional[DetectorParams] = None, radius: float = 4.0, threads: int = 1):
        expected = LOSS_FOR_MODEL.get(model.kind)
        if expected != config.loss_kind:
            raise ConfigurationError(
                f"Model {model.kind} trains with the {expected} loss, not {config.loss_kind}"
            )
        self.model = model
        self.config = config
        self.extraction = extraction or ExtractionParams()
        self.detector = detector or DetectorParams()
        self.radius = radius
        self.threads = threads
        self.optimizer = SGDMomentum(model.parameters(), config.learning_rate, config.momentum)
        self.out_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None
        self._last_good: List[Tuple[str, np.ndarray]] = []

    @property
    def uses_whd(self) -> bool:
        return self.config.loss_kind == 'whd'

    def train(self, train_samples: Sequence[Sample], val_samples: Sequence[Sample] = ()) -> TrainHistory:
        if not train_samples:
            raise ConfigurationError("Training needs at least one training sample")
        config = self.config
        # shuffling depends only on (seed, epoch), never on file order
        train_samples = sorted(train_samples, key=lambda sample: sample.filename)
        val_samples = sorted(val_samples, key=lambda sample: sample.filename)
        if not val_samples:
            logger.warning("No validation samples; best.ckpt will hold the final epoch")

        history = TrainHistory()
        best_f1 = -math.inf
        self._snapshot()
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        logger.info(
            f"Training {self.model.kind} on {len(train_samples)} images for up to {config.epochs} epochs "
            f"(lr={config.learning_rate}, momentum={config.momentum}, batch={config.batch_size})"
        )
        epochs = tqdm(range(1, config.epochs + 1), desc='train', unit='epoch')
        for epoch in epochs:
            self.model.train()
            try:
                train_loss = self._run_epoch(train_samples, epoch)
            except TrainingDivergedError:
                self._restore()
                raise
            history.train_losses.append(train_loss)
            epochs.set_postfix(loss=f'{train_loss:.4f}')

            stale = False
            # the final epoch always validates
            if val_samples and (epoch % config.validate_every == 0 or epoch == config.epochs):
                validation = self.validate(val_samples, epoch)
                history.validations.append(validation)
                if validation.f1 > best_f1:
                    best_f1 = validation.f1
                    history.best_epoch = epoch
                    self._save(BEST_NAME)
                patience = config.early_stop_patience
                stale = patience is not None and epoch - history.best_epoch >= patience

            self._save(LATEST_NAME)
            self._snapshot()
            self._write_history(history)
            if stale:
                logger.info(f"Validation F1 has not improved since epoch {history.best_epoch}; stopping at {epoch}")
                history.stopped_early = True
                break

        if not val_samples:
            history.best_epoch = len(history.train_losses)
            self._save(BEST_NAME)
        self.model.eval()
        logger.info(f"Training finished after {len(history.train_losses)} epochs; best epoch {history.best_epoch}")
        return history

    def _run_epoch(self, samples: Sequence[Sample], epoch: int) -> float:
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(samples))
        batch_size = self.config.batch_size
        total, weight = 0.0, 0
        for start in range(0, len(order), batch_size):
            indices = order[start:start + batch_size]
            batch = [self._prepared(samples[i], epoch, int(i)) for i in indices]
            loss = self._step(batch, epoch, indices)
            if loss is None:
                continue
            if not math.isfinite(loss):
                last_good = epoch - 1
                logger.error(f"Non-finite training loss in epoch {epoch}; restoring epoch {last_good}")
                raise TrainingDivergedError(epoch, last_good)
            total += loss * len(batch)
            weight += len(batch)
        return total / weight if weight else math.nan

    def _prepared(self, sample: Sample, epoch: int, index: int) -> Sample:
        if not self.config.augment:
            return sample
        rng = np.random.default_rng([self.config.seed, AUGMENT_STREAM, epoch, index])
        choice = int(rng.integers(len(AUGMENT_OPS) + 1))
        if choice == len(AUGMENT_OPS):
            return sample
        image, gt = augment(sample.image, sample.gt, [AUGMENT_OPS[choice]], brightness=rng.uniform(0.8, 1.0))
        return Sample(sample.filename, image, gt)

    def _step(self, batch: List[Sample], epoch: int, indices) -> Optional[float]:
        with Tape() as tape:
            if self.uses_whd:
                loss = self._whd_loss(batch)
            else:
                patches, labels = self._classifier_batch(batch, [TRAIN_STREAM, epoch], indices)
                if not len(labels):
                    logger.debug(f"Epoch {epoch}: batch without labeled proposals skipped")
                    return None
                loss = cross_entropy(self.model(patches), labels)
            value = float(loss.value)
            if not math.isfinite(value):
                return value
            backward(tape, loss)
        self.optimizer.step()
        return value

    def _whd_loss(self, batch: Sequence[Sample]):
        images = to_batch([sample.image for sample in batch])
        out = unet_forward(self.model, images)
        params = self.config.whd_params(*images.shape[2:])
        return batch_whd_loss(out.probmap, [sample.gt.centroids for sample in batch], params, out.signal)

    def _classifier_batch(self, batch: Sequence[Sample], stream: List[int], indices) -> Tuple[np.ndarray, np.ndarray]:
        """Up to positives_per_image positives and negative_ratio times as many negatives per image"""
        config = self.config
        patch_size = self.model.config.patch_size
        wanted_negatives = config.negative_ratio * config.positives_per_image
        patches, labels = [], []
        for sample, index in zip(batch, indices):
            seed = _seed(config.seed, *stream, int(index))
            rng = np.random.default_rng(seed)
            proposals = generate_train_proposals(
                sample.gt.boxes, sample.image.shape[0], n=config.proposals_per_image, seed=seed,
            )
            positives = [p.box for p in proposals if p.label == POSITIVE]
            negatives = [p.box for p in proposals if p.label == NEGATIVE]
            chosen_pos = rng.permutation(len(positives))[:config.positives_per_image]
            chosen_neg = rng.permutation(len(negatives))[:wanted_negatives]
            boxes = [positives[i] for i in chosen_pos] + [negatives[i] for i in chosen_neg]
            if not boxes:
                continue
            patches.append(extract_patches(sample.image, boxes, patch_size))
            labels.extend([SHEEP_CLASS] * len(chosen_pos) + [1 - SHEEP_CLASS] * len(chosen_neg))
        if not patches:
            return np.zeros((0, 3, patch_size, patch_size)), np.zeros(0, dtype=np.intp)
        return np.concatenate(patches), np.asarray(labels, dtype=np.intp)

    def validate(self, samples: Sequence[Sample], epoch: int) -> Validation:
        """Loss and F1 over the whole split in eval mode"""
        self.model.eval()
        loss = self._validation_loss(samples)
        predictions = PredictionService(
            self.model, self.extraction, self.detector, threads=self.threads,
        ).predict(samples)
        report = EvaluationService(self.radius).evaluate(
            {p.filename: p.points for p in predictions},
            {sample.filename: sample.gt for sample in samples},
            self.model.kind, 'val',
        )
        logger.info(f"Epoch {epoch}: validation loss {loss:.4f}, F1 {report.f1:.4f}")
        return Validation(epoch=epoch, loss=loss, f1=report.f1)

    def _validation_loss(self, samples: Sequence[Sample]) -> float:
        batch_size = get_project_setting('INFERENCE_BATCH_SIZE', 8)
        total, weight = 0.0, 0
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            if self.uses_whd:
                total += float(self._whd_loss(chunk).value) * len(chunk)
                weight += len(chunk)
            else:
                indices = range(start, start + len(chunk))
                patches, labels = self._classifier_batch(chunk, [VALIDATION_STREAM], indices)
                if len(labels):
                    total += float(cross_entropy(self.model(patches), labels).value) * len(labels)
                    weight += len(labels)
        return total / weight if weight else math.nan

    def _save(self, name: str) -> None:
        if self.out_dir:
            checkpoint_save(self.model, self.out_dir / name)

    def _snapshot(self) -> None:
        self._last_good = [(name, value.copy()) for name, value in self.model.state_records()]

    def _restore(self) -> None:
        """Back to the end of the last completed epoch"""
        latest = self.out_dir / LATEST_NAME if self.out_dir else None
        if latest is not None and latest.is_file():
            load_into(self.model, latest)
        else:
            self.model.load_state_records(self._last_good)
        self.optimizer.reset()

    def _write_history(self, history: TrainHistory) -> None:
        if self.out_dir:
            history.to_frame().to_csv(self.out_dir / HISTORY_NAME, index=False, float_format='%.8g')


def train(model: Model, train_samples: Sequence[Sample], config: TrainConfig,
          val_samples: Sequence[Sample] = (), **kwargs) -> TrainHistory:
    """Train model in place and return its history"""
    return TrainingService(model, config, **kwargs).train(train_samples, val_samples)
