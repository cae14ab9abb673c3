# apps/diffcore/tape.py
"""
The tape records primitive operations in execution order and replays them
backwards to accumulate gradients.
"""
import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from apps.common.exceptions import ShapeError
from apps.diffcore.tensor import Tensor, Variable

BackwardFn = Callable[[Tensor], Tuple[Optional[Tensor], ...]]

_local = threading.local()


@dataclass(frozen=True)
class TapeRecord:
    op: str
    inputs: Tuple[Variable, ...]
    output: Variable
    backward: BackwardFn


class Tape:
    """Ordered record of the operations run while the tape is active"""

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __enter__(self) -> 'Tape':
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, record: TapeRecord) -> None:
        self.records.append(record)

    def reset(self) -> None:
        self.records.clear()


def _stack() -> List[Tape]:
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def apply_op(op: str, inputs: Sequence[Variable], value: Tensor, backward: BackwardFn) -> Variable:
    """
    Wrap a computed value as the output of a primitive.

    The operation is recorded only while a Tape is active and at least one
    input requires a gradient. backward maps the output gradient to one
    gradient (or None) per input.
    """
    tape = active_tape()
    needs_grad = tape is not None and any(v.requires_grad for v in inputs)
    out = Variable(value, requires_grad=needs_grad)
    if needs_grad:
        out.is_leaf = False
        out.grad = None
        tape.record(TapeRecord(op=op, inputs=tuple(inputs), output=out, backward=backward))
    return out


def backward(tape: Tape, root: Variable, retain_graph: bool = False) -> None:
    """
    Accumulate d(root)/d(leaf) into every requires-grad leaf reached from root.

    Intermediate gradients live only for the duration of the call. Leaf
    gradients from one call are summed first and added to .grad once, so
    repeating a call adds exactly the same amount again. The tape is reset
    afterwards unless retain_graph is set.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward requires a scalar root, got shape {root.shape}")

    seed = np.ones_like(root.value)
    grads = {root.node_id: seed}
    leaf_totals = {}
    leaves = {}

    if root.requires_grad and root.is_leaf:
        leaf_totals[root.node_id] = seed
        leaves[root.node_id] = root

    for record in reversed(tape.records):
        grad_out = grads.pop(record.output.node_id, None)
        if grad_out is None:
            continue
        input_grads = record.backward(grad_out)
        for var, grad in zip(record.inputs, input_grads):
            if grad is None or not var.requires_grad:
                continue
            if grad.shape != var.shape:
                raise ShapeError(
                    f"{record.op} backward produced gradient of shape {grad.shape} "
                    f"for input of shape {var.shape}"
                )
            store = leaf_totals if var.is_leaf else grads
            if var.is_leaf:
                leaves[var.node_id] = var
            if var.node_id in store:
                store[var.node_id] = store[var.node_id] + grad
            else:
                store[var.node_id] = grad

    for node_id, total in leaf_totals.items():
        var = leaves[node_id]
        if var.grad is None:
            var.grad = np.zeros_like(var.value)
        var.grad += total

    if not retain_graph:
        tape.reset()
