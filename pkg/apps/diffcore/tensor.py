# apps/diffcore/tensor.py
"""
Tensor values and differentiable Variables.

A Tensor is a dense numpy array. A Variable wraps one together with a
gradient of the same shape and the bookkeeping the tape needs.
"""
import itertools
import threading
from typing import Optional, Tuple, Union

import numpy as np

from apps.common.exceptions import ConfigurationError

Tensor = np.ndarray

_DTYPES = {'float64': np.float64, 'float32': np.float32}
_node_ids = itertools.count(1)
_state = threading.local()


def set_default_dtype(name: str) -> None:
    """Select float64 (default) or float32 for new Variables in this thread"""
    if name not in _DTYPES:
        raise ConfigurationError(f"Unsupported precision '{name}', expected one of {sorted(_DTYPES)}")
    _state.dtype = _DTYPES[name]


def get_default_dtype() -> type:
    return getattr(_state, 'dtype', np.float64)


def as_tensor(value, dtype=None) -> Tensor:
    """Convert value to a contiguous array of the default floating dtype"""
    return np.ascontiguousarray(value, dtype=dtype or get_default_dtype())


class Variable:
    """A tensor value that can take part in reverse-mode differentiation"""

    # Makes ndarray <op> Variable defer to Variable's reflected operators
    __array_priority__ = 1000

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = as_tensor(value)
        self.requires_grad = requires_grad
        self.name = name
        self.node_id = next(_node_ids)
        self.is_leaf = True
        self.grad = np.zeros_like(self.value) if requires_grad else None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def detach(self) -> 'Variable':
        """Copy the value into a new constant Variable"""
        return Variable(self.value.copy())

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float('nan')

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ''
        return f"Variable(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Arithmetic delegates to the recorded primitives
    def __add__(self, other):
        from apps.diffcore import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from apps.diffcore import functional as F
        return F.add(self, other)

    def __sub__(self, other):
        from apps.diffcore import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from apps.diffcore import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from apps.diffcore import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from apps.diffcore import functional as F
        return F.mul(self, other)

    def __truediv__(self, other):
        from apps.diffcore import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from apps.diffcore import functional as F
        return F.div(other, self)

    def __neg__(self):
        from apps.diffcore import functional as F
        return F.mul(self, -1.0)

    def __pow__(self, exponent: Union[int, float]):
        from apps.diffcore import functional as F
        return F.power(self, exponent)


def parameter(value, name: Optional[str] = None) -> Variable:
    """Create a trainable leaf Variable"""
    return Variable(value, requires_grad=True, name=name)


def constant(value) -> Variable:
    """Wrap a value as a non-differentiable Variable"""
    if isinstance(value, Variable):
        return value
    return Variable(value)
