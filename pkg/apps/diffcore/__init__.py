from apps.diffcore.tape import Tape, TapeRecord, active_tape, apply_op, backward
from apps.diffcore.tensor import (
    Tensor, Variable, as_tensor, constant, get_default_dtype, parameter, set_default_dtype,
)

__all__ = [
    'Tape', 'TapeRecord', 'Tensor', 'Variable', 'active_tape', 'apply_op', 'as_tensor',
    'backward', 'constant', 'get_default_dtype', 'parameter', 'set_default_dtype',
]
