# apps/losses/counting.py
from dataclasses import dataclass
from typing import Union

import numpy as np

from apps.common.exceptions import ProbabilityMapError
from apps.diffcore import Variable


def _as_array(p: Union[Variable, np.ndarray]) -> np.ndarray:
    return p.value if isinstance(p, Variable) else np.asarray(p, dtype=np.float64)


def check_probability_map(p: Union[Variable, np.ndarray]) -> np.ndarray:
    """Return the map values, raising if any lies outside [0, 1]"""
    values = _as_array(p)
    if values.size and (np.min(values) < 0.0 or np.max(values) > 1.0 or not np.all(np.isfinite(values))):
        raise ProbabilityMapError(
            f"Probability map values must lie in [0, 1], got range [{np.min(values)}, {np.max(values)}]"
        )
    return values


def soft_count(p: Union[Variable, np.ndarray]) -> float:
    """Sum of the probability map, the soft number of detections"""
    return float(check_probability_map(p).sum())


def smooth_l1(x: float) -> float:
    """0.5 x^2 for |x| < 1, |x| - 0.5 otherwise"""
    x = float(x)
    return 0.5 * x * x if abs(x) < 1.0 else abs(x) - 0.5


def softplus_count(s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Estimated count log(1 + e^s)"""
    value = np.logaddexp(0.0, s)
    return float(value) if np.ndim(value) == 0 else value


def rounded_count(c_hat: float) -> int:
    """Nearest integer count; halves round to even"""
    return int(np.rint(c_hat))


@dataclass(frozen=True)
class CountPair:
    true_count: float
    signal: float
    estimated: float

    @classmethod
    def from_signal(cls, true_count: float, signal: float) -> 'CountPair':
        return cls(true_count=float(true_count), signal=float(signal), estimated=softplus_count(signal))

    @property
    def rounded(self) -> int:
        return rounded_count(self.estimated)

    @property
    def loss(self) -> float:
        return smooth_l1(self.true_count - self.estimated)
