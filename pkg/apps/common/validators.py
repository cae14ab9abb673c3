# apps/common/validators.py
import math
from typing import Iterable, List, Sequence, Tuple, Union

from apps.common.exceptions import ConfigurationError


def parse_int_list(value: Union[str, Iterable[int]]) -> List[int]:
    """Parse a comma separated list such as '8,12' into ints"""
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(',')]
        try:
            return [int(part) for part in parts if part]
        except ValueError:
            raise ConfigurationError(f"Expected a comma separated list of integers, got '{value}'")
    return [int(item) for item in value]


def parse_range(value: Union[str, Sequence[float]]) -> Tuple[float, float]:
    """Parse 'low,high' into an ordered pair"""
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(',') if part.strip()]
    else:
        parts = list(value)
    if len(parts) != 2:
        raise ConfigurationError(f"Expected a 'low,high' pair, got '{value}'")
    low, high = float(parts[0]), float(parts[1])
    if low > high:
        raise ConfigurationError(f"Range lower bound {low} exceeds upper bound {high}")
    return low, high


def validate_power_of_two(value: int, name: str = 'value') -> int:
    """Validate that value is a positive power of two"""
    if value < 1 or value & (value - 1):
        raise ConfigurationError(f"{name} must be a power of two, got {value}")
    return value


def validate_unit_range(low: float, high: float, name: str = 'range') -> None:
    """Validate that low <= high and both lie in [0, 1]"""
    if not (0.0 <= low <= high <= 1.0):
        raise ConfigurationError(f"{name} must satisfy 0 <= low <= high <= 1, got ({low}, {high})")


def validate_split_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    """Validate train/val/test fractions"""
    if len(fractions) != 3:
        raise ConfigurationError(f"Expected three split fractions, got {len(fractions)}")
    if any(fraction < 0 for fraction in fractions):
        raise ConfigurationError(f"Split fractions must be non-negative, got {list(fractions)}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"Split fractions must sum to 1, got {sum(fractions)}")
    return float(fractions[0]), float(fractions[1]), float(fractions[2])
