# apps/trainer/checkpoints.py
import logging
from pathlib import Path

from apps.common.exceptions import CheckpointError
from apps.common.utils import PathLike, atomic_write
from apps.diffcore.checkpoint import decode_checkpoint, encode_checkpoint
from apps.networks.registry import Model, build_model

logger = logging.getLogger(__name__)

BEST_NAME = 'best.ckpt'
LATEST_NAME = 'latest.ckpt'


def checkpoint_bytes(model: Model) -> bytes:
    return encode_checkpoint(model.descriptor, model.state_records())


def checkpoint_save(model: Model, path: PathLike) -> Path:
    """Write descriptor, parameters and batchnorm statistics; the replace is atomic"""
    try:
        path = atomic_write(path, checkpoint_bytes(model))
    except OSError as exc:
        raise CheckpointError(f"Cannot write checkpoint {path}: {exc}") from exc
    logger.debug(f"Saved {model.kind} checkpoint to {path}")
    return path


def _read(path: PathLike):
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"Checkpoint {path} not found") from exc
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)


def checkpoint_load(path: PathLike) -> Model:
    """Rebuild the architecture named in the descriptor and load its state"""
    descriptor, records = _read(path)
    model = build_model(descriptor)
    try:
        model.load_state_records(records)
    except ValueError as exc:
        raise CheckpointError(f"Checkpoint {path} does not fit its own descriptor: {exc}") from exc
    logger.info(f"Loaded {model.kind} checkpoint from {path} ({model.parameter_count()} parameters)")
    return model


def load_into(model: Model, path: PathLike) -> Model:
    """Restore state into an existing model of the same architecture"""
    descriptor, records = _read(path)
    if descriptor != model.descriptor:
        raise CheckpointError(
            f"Checkpoint {path} holds architecture {descriptor}, model is {model.descriptor}"
        )
    try:
        model.load_state_records(records)
    except ValueError as exc:
        raise CheckpointError(f"Checkpoint {path} does not fit the model: {exc}") from exc
    return model
