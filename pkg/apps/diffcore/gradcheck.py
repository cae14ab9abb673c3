# apps/diffcore/gradcheck.py
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from apps.common.exceptions import ConfigurationError, GradientError, ShapeError
from apps.diffcore.tape import Tape, backward
from apps.diffcore.tensor import Variable

logger = logging.getLogger(__name__)

ScalarFn = Callable[..., Variable]


def _evaluate(f: ScalarFn, inputs: Sequence[Variable]) -> float:
    out = f(*inputs)
    if out.value.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
    value = float(out.value.reshape(-1)[0])
    if not np.isfinite(value):
        raise GradientError(f"grad_check: function value is not finite ({value})")
    return value


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(f: ScalarFn, inputs: Sequence[Variable], step: float = 1e-6,
               max_coords: Optional[int] = None, seed: int = 0) -> float:
    """
    Compare analytic gradients with central differences.

    Every requires-grad input is checked coordinate by coordinate, or on
    max_coords coordinates drawn uniformly across all inputs. Returns the
    largest relative error |a - n| / max(|a|, |n|, 1e-8).
    """
    if step <= 0:
        raise ConfigurationError(f"grad_check step must be > 0, got {step}")
    checked = [v for v in inputs if v.requires_grad]
    if not checked:
        raise ConfigurationError("grad_check needs at least one input with requires_grad")

    for var in checked:
        var.zero_grad()
    with Tape() as tape:
        out = f(*inputs)
        if out.value.size != 1:
            raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
        if not np.all(np.isfinite(out.value)):
            raise GradientError(f"grad_check: function value is not finite ({out.value})")
        backward(tape, out)
    analytic = [var.grad.copy() for var in checked]

    coords: List[Tuple[int, int]] = [(i, j) for i, var in enumerate(checked) for j in range(var.size)]
    if max_coords is not None and max_coords < len(coords):
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(picks)]

    worst = 0.0
    for i, j in coords:
        flat = checked[i].value.reshape(-1)
        original = flat[j]
        flat[j] = original + step
        plus = _evaluate(f, inputs)
        flat[j] = original - step
        minus = _evaluate(f, inputs)
        flat[j] = original
        numeric = (plus - minus) / (2.0 * step)
        error = relative_error(float(analytic[i].reshape(-1)[j]), numeric)
        if error > worst:
            worst = error

    logger.debug(f"grad_check over {len(coords)} coordinates: max relative error {worst:.3e}")
    return worst
