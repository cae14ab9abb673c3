# apps/metrics/timing.py
import logging
import time
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from apps.common.exceptions import ConfigurationError, EvaluationError

logger = logging.getLogger(__name__)


def time_per_image(infer: Callable[[Sequence], object], images: Sequence, warmup: int = 1, reps: int = 3) -> float:
    """
    Median over reps of wall time per image for infer(images), with BLAS
    pinned to one thread. Warmup calls are not timed.
    """
    if reps < 1:
        raise ConfigurationError(f"reps must be at least 1, got {reps}")
    if warmup < 0:
        raise ConfigurationError(f"warmup must be non-negative, got {warmup}")
    if not len(images):
        raise EvaluationError("Cannot time inference on an empty dataset")

    with threadpool_limits(limits=1):
        for _ in range(warmup):
            infer(images)
        samples = []
        for _ in range(reps):
            start = time.perf_counter()
            infer(images)
            samples.append((time.perf_counter() - start) / len(images))
    tpi = float(np.median(samples))
    logger.info(f"Time per image {tpi:.4f}s (median of {reps}, spread {min(samples):.4f}-{max(samples):.4f}s)")
    return tpi
