# apps/diffcore/functional.py
"""
Differentiable primitives.

Every function takes Variables (plain numbers and arrays are wrapped as
constants), computes the forward value with numpy and records a backward
closure on the active tape. Convolution follows the cross-correlation
convention: kernels are not flipped.
"""
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from apps.common.exceptions import ConfigurationError, LabelError, ShapeError
from apps.diffcore.tape import apply_op
from apps.diffcore.tensor import Tensor, Variable, constant

Operand = Union[Variable, float, int, np.ndarray]
Axes = Optional[Union[int, Sequence[int]]]

ELEMENTWISE_KINDS = ('add', 'sub', 'mul', 'div')
ACTIVATION_KINDS = ('relu', 'sigmoid', 'softplus')
REDUCE_KINDS = ('sum', 'mean', 'min')


def _unbroadcast(grad: Tensor, shape: Tuple[int, ...]) -> Tensor:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def elementwise(kind: str, a: Operand, b: Operand) -> Variable:
    """
    add, sub, mul or div of two equally shaped operands.

    Either operand may instead hold a single value, which is broadcast.
    """
    if kind not in ELEMENTWISE_KINDS:
        raise ConfigurationError(f"Unknown elementwise kind '{kind}'")
    a, b = constant(a), constant(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"elementwise {kind}: shapes {a.shape} and {b.shape} differ")

    av, bv = a.value, b.value
    if kind == 'add':
        value = av + bv
    elif kind == 'sub':
        value = av - bv
    elif kind == 'mul':
        value = av * bv
    else:
        if np.any(bv == 0):
            raise ZeroDivisionError(f"elementwise div: divisor of shape {b.shape} contains zeros")
        value = av / bv
    value = np.asarray(value)
    out_shape = value.shape

    def _backward(g: Tensor):
        g = np.broadcast_to(g, out_shape)
        if kind == 'add':
            ga, gb = g, g
        elif kind == 'sub':
            ga, gb = g, -g
        elif kind == 'mul':
            ga, gb = g * bv, g * av
        else:
            ga, gb = g / bv, -g * av / (bv * bv)
        return (
            _unbroadcast(np.asarray(ga), a.shape) if a.requires_grad else None,
            _unbroadcast(np.asarray(gb), b.shape) if b.requires_grad else None,
        )

    return apply_op(kind, (a, b), value, _backward)


def add(a: Operand, b: Operand) -> Variable:
    return elementwise('add', a, b)


def sub(a: Operand, b: Operand) -> Variable:
    return elementwise('sub', a, b)


def mul(a: Operand, b: Operand) -> Variable:
    return elementwise('mul', a, b)


def div(a: Operand, b: Operand) -> Variable:
    return elementwise('div', a, b)


def power(x: Operand, exponent: float) -> Variable:
    """x ** exponent for a real exponent >= 0"""
    if exponent < 0:
        raise ConfigurationError(f"power exponent must be >= 0, got {exponent}")
    x = constant(x)
    xv = x.value
    value = xv ** exponent

    def _backward(g: Tensor):
        if exponent == 0:
            return (np.zeros_like(xv),)
        return (g * exponent * xv ** (exponent - 1),)

    return apply_op('power', (x,), value, _backward)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def linear(x: Variable, weight: Variable, bias: Optional[Variable] = None) -> Variable:
    """x [N, Fin] @ weight [Fin, Fout] + bias [Fout]"""
    x, weight = constant(x), constant(weight)
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"linear expects 2-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: input features {x.shape[1]} do not match weight rows {weight.shape[0]}")
    inputs = [x, weight]
    value = x.value @ weight.value
    if bias is not None:
        bias = constant(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear: bias shape {bias.shape} does not match ({weight.shape[1]},)")
        value = value + bias.value
        inputs.append(bias)
    xv, wv = x.value, weight.value

    def _backward(g: Tensor):
        grads = [
            g @ wv.T if x.requires_grad else None,
            xv.T @ g if weight.requires_grad else None,
        ]
        if bias is not None:
            grads.append(g.sum(axis=0) if bias.requires_grad else None)
        return tuple(grads)

    return apply_op('linear', inputs, value, _backward)


def conv2d_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Variable, kernel: Variable, bias: Optional[Variable] = None,
           stride: int = 1, padding: int = 0) -> Variable:
    """
    2-d cross-correlation of x [N, C, H, W] with kernel [K, C, kh, kw].

    Zero padding is applied on all four sides. Output spatial size is
    floor((H + 2p - kh) / stride) + 1.
    """
    x, kernel = constant(x), constant(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    if stride < 1:
        raise ConfigurationError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ConfigurationError(f"conv2d padding must be >= 0, got {padding}")
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {kc}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} is larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )

    xp = np.pad(x.value, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.value
    ho = conv2d_output_size(h, kh, stride, padding)
    wo = conv2d_output_size(w, kw, stride, padding)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # windows: [N, C, Ho, Wo, kh, kw]
    value = np.tensordot(windows, kernel.value, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    inputs = [x, kernel]
    if bias is not None:
        bias = constant(bias)
        if bias.shape != (k,):
            raise ShapeError(f"conv2d: bias shape {bias.shape} does not match ({k},)")
        value = value + bias.value[None, :, None, None]
        inputs.append(bias)
    value = np.ascontiguousarray(value)
    kv = kernel.value
    padded_shape = xp.shape

    def _backward(g: Tensor):
        grad_x = grad_k = grad_b = None
        if kernel.requires_grad:
            grad_k = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            grad_xp = np.zeros(padded_shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    contribution = np.tensordot(g, kv[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                    grad_xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contribution
            grad_x = grad_xp[:, :, padding:padding + h, padding:padding + w] if padding else grad_xp
        grads = [grad_x, grad_k]
        if bias is not None:
            grad_b = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
            grads.append(grad_b)
        return tuple(grads)

    return apply_op('conv2d', inputs, value, _backward)


def maxpool2d(x: Variable, window: int = 2, stride: int = 2) -> Variable:
    """
    Non-overlapping max pooling.

    Odd heights or widths are padded at the bottom/right with -inf. The
    gradient goes to the first maximum of each window in row-major order.
    """
    x = constant(x)
    if window != stride:
        raise ConfigurationError(f"maxpool2d supports window == stride only, got {window} and {stride}")
    if window < 1:
        raise ConfigurationError(f"maxpool2d window must be >= 1, got {window}")
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    ph, pw = (-h) % window, (-w) % window
    xv = x.value
    if ph or pw:
        xv = np.pad(xv, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
    ho, wo = xv.shape[2] // window, xv.shape[3] // window
    blocks = xv.reshape(n, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, -1)
    argmax = blocks.argmax(axis=-1)
    value = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def _backward(g: Tensor):
        routed = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(routed, argmax[..., None], g[..., None], axis=-1)
        routed = routed.reshape(n, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
        routed = routed.reshape(n, c, ho * window, wo * window)
        return (np.ascontiguousarray(routed[:, :, :h, :w]),)

    return apply_op('maxpool2d', (x,), value, _backward)


def upsample_nearest(x: Variable, factor: int) -> Variable:
    """Replicate each pixel of x [N, C, H, W] into a factor x factor block"""
    x = constant(x)
    if factor < 1:
        raise ConfigurationError(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects a 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    value = x.value.repeat(factor, axis=2).repeat(factor, axis=3)

    def _backward(g: Tensor):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return apply_op('upsample_nearest', (x,), value, _backward)


class BatchNormState:
    """Running mean and variance of one batchnorm layer"""

    def __init__(self, channels: int, dtype=None):
        self.running_mean = np.zeros(channels, dtype=dtype or np.float64)
        self.running_var = np.ones(channels, dtype=dtype or np.float64)


def batchnorm2d(x: Variable, gamma: Variable, beta: Variable, state: BatchNormState,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Variable:
    """
    Per-channel batch normalization of x [N, C, H, W].

    In training mode the batch statistics over (N, H, W) are used and the
    running statistics are updated in place (running variance is the
    unbiased estimate). In eval mode the running statistics are used.
    """
    x, gamma, beta = constant(x), constant(gamma), constant(beta)
    if eps <= 0:
        raise ConfigurationError(f"batchnorm eps must be > 0, got {eps}")
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d expects a 4-d input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma/beta must have shape ({c},)")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    g_shape = (1, c, 1, 1)
    xv, gv = x.value, gamma.value

    if training:
        if m < 2:
            raise ShapeError(
                f"batchnorm2d in training mode needs at least two values per channel, got {m}"
            )
        mean = xv.mean(axis=axes)
        var = xv.var(axis=axes)
        state.running_mean *= 1.0 - momentum
        state.running_mean += momentum * mean
        state.running_var *= 1.0 - momentum
        state.running_var += momentum * var * m / (m - 1)
    else:
        mean = state.running_mean.astype(xv.dtype)
        var = state.running_var.astype(xv.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (xv - mean.reshape(g_shape)) * inv_std.reshape(g_shape)
    value = gv.reshape(g_shape) * x_hat + beta.value.reshape(g_shape)

    def _backward(g: Tensor):
        grad_gamma = (g * x_hat).sum(axis=axes) if gamma.requires_grad else None
        grad_beta = g.sum(axis=axes) if beta.requires_grad else None
        grad_x = None
        if x.requires_grad:
            d_hat = g * gv.reshape(g_shape)
            if training:
                grad_x = (inv_std.reshape(g_shape) / m) * (
                    m * d_hat
                    - d_hat.sum(axis=axes, keepdims=True)
                    - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
                )
            else:
                grad_x = d_hat * inv_std.reshape(g_shape)
        return grad_x, grad_gamma, grad_beta

    return apply_op('batchnorm2d', (x, gamma, beta), value, _backward)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def activation(kind: str, x: Variable) -> Variable:
    """Elementwise relu, sigmoid or softplus"""
    x = constant(x)
    xv = x.value
    if kind == 'relu':
        value = np.maximum(xv, 0)

        def _backward(g):
            return (g * (xv > 0),)
    elif kind == 'sigmoid':
        value = expit(xv)

        def _backward(g):
            return (g * value * (1.0 - value),)
    elif kind == 'softplus':
        # logaddexp(0, s) == log(1 + e^s) without overflow for large |s|
        value = np.logaddexp(0.0, xv)

        def _backward(g):
            return (g * expit(xv),)
    else:
        raise ConfigurationError(f"Unknown activation '{kind}', expected one of {ACTIVATION_KINDS}")
    return apply_op(kind, (x,), value, _backward)


def relu(x: Variable) -> Variable:
    return activation('relu', x)


def sigmoid(x: Variable) -> Variable:
    return activation('sigmoid', x)


def softplus(x: Variable) -> Variable:
    return activation('softplus', x)


def smooth_l1(x: Variable) -> Variable:
    """0.5 x^2 where |x| < 1, |x| - 0.5 elsewhere"""
    x = constant(x)
    xv = x.value
    inner = np.abs(xv) < 1.0
    value = np.where(inner, 0.5 * xv * xv, np.abs(xv) - 0.5)

    def _backward(g):
        return (g * np.where(inner, xv, np.sign(xv)),)

    return apply_op('smooth_l1', (x,), value, _backward)


# ---------------------------------------------------------------------------
# Shape plumbing
# ---------------------------------------------------------------------------

def concat_channels(a: Variable, b: Variable) -> Variable:
    """Concatenate along axis 1; all other dimensions must agree"""
    a, b = constant(a), constant(b)
    if a.ndim != b.ndim or a.ndim < 2:
        raise ShapeError(f"concat_channels: incompatible ranks {a.shape} and {b.shape}")
    if a.shape[:1] + a.shape[2:] != b.shape[:1] + b.shape[2:]:
        raise ShapeError(f"concat_channels: non-channel dimensions differ, {a.shape} vs {b.shape}")
    split = a.shape[1]
    value = np.concatenate([a.value, b.value], axis=1)

    def _backward(g):
        return (
            np.ascontiguousarray(g[:, :split]) if a.requires_grad else None,
            np.ascontiguousarray(g[:, split:]) if b.requires_grad else None,
        )

    return apply_op('concat_channels', (a, b), value, _backward)


def reshape(x: Variable, shape: Sequence[int]) -> Variable:
    x = constant(x)
    original = x.shape
    try:
        value = x.value.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {original} to {tuple(shape)}") from exc

    def _backward(g):
        return (g.reshape(original),)

    return apply_op('reshape', (x,), value, _backward)


def flatten(x: Variable) -> Variable:
    """Collapse every axis after the first"""
    x = constant(x)
    return reshape(x, (x.shape[0], -1))


def broadcast_to(x: Variable, shape: Sequence[int]) -> Variable:
    """Broadcast x against shape using numpy rules; gradients are summed back"""
    x = constant(x)
    shape = tuple(shape)
    try:
        value = np.array(np.broadcast_to(x.value, shape))
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from exc
    original = x.shape
    lead = len(shape) - len(original)

    def _backward(g):
        grad = g.sum(axis=tuple(range(lead))) if lead else g
        keep = tuple(i for i, size in enumerate(original) if size == 1 and grad.shape[i] != 1)
        if keep:
            grad = grad.sum(axis=keep, keepdims=True)
        return (grad.reshape(original),)

    return apply_op('broadcast_to', (x,), value, _backward)


def index_select(x: Variable, indices: Union[int, Sequence[int], np.ndarray]) -> Variable:
    """Select along axis 0; an integer index drops that axis"""
    x = constant(x)
    idx = indices if isinstance(indices, (int, np.integer)) else np.asarray(indices, dtype=np.intp)
    try:
        value = np.array(x.value[idx])
    except IndexError as exc:
        raise ShapeError(f"index_select: {indices} out of range for axis 0 of size {x.shape[0]}") from exc
    original = x.shape

    def _backward(g):
        grad = np.zeros(original, dtype=g.dtype)
        np.add.at(grad, idx, g)
        return (grad,)

    return apply_op('index_select', (x,), value, _backward)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _normalize_axes(ndim: int, axes: Axes) -> Tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, (int, np.integer)):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise ShapeError(f"reduce axis {axis} is invalid for rank {ndim}")
        normalized.append(axis % ndim)
    if len(set(normalized)) != len(normalized):
        raise ShapeError(f"reduce axes {tuple(axes)} contain duplicates")
    return tuple(sorted(normalized))


def reduce(kind: str, x: Variable, axes: Axes = None, keepdims: bool = False) -> Variable:
    """
    sum, mean or min over axes (all axes by default).

    min sends the gradient to the first minimum in row-major order of the
    reduced axes.
    """
    if kind not in REDUCE_KINDS:
        raise ConfigurationError(f"Unknown reduction '{kind}', expected one of {REDUCE_KINDS}")
    x = constant(x)
    axes = _normalize_axes(x.ndim, axes)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"reduce {kind}: empty reduction over axes {axes} of shape {x.shape}")
    xv = x.value
    kept_shape = tuple(1 if i in axes else size for i, size in enumerate(x.shape))

    if kind == 'sum':
        value = xv.sum(axis=axes, keepdims=keepdims)

        def _backward(g):
            return (np.broadcast_to(np.reshape(g, kept_shape), x.shape).copy(),)
    elif kind == 'mean':
        value = xv.mean(axis=axes, keepdims=keepdims)

        def _backward(g):
            return (np.broadcast_to(np.reshape(g, kept_shape) / count, x.shape).copy(),)
    else:
        others = tuple(i for i in range(x.ndim) if i not in axes)
        order = others + axes
        moved = xv.transpose(order)
        flat = moved.reshape(moved.shape[:len(others)] + (count,))
        argmin = flat.argmin(axis=-1)
        minimum = np.take_along_axis(flat, argmin[..., None], axis=-1)[..., 0]
        value = minimum.reshape(kept_shape) if keepdims else minimum
        inverse = np.argsort(order)

        def _backward(g):
            routed = np.zeros(flat.shape, dtype=np.asarray(g).dtype)
            g_flat = np.reshape(g, argmin.shape)
            np.put_along_axis(routed, argmin[..., None], g_flat[..., None], axis=-1)
            return (routed.reshape(moved.shape).transpose(inverse),)

    return apply_op(f'reduce_{kind}', (x,), np.asarray(value), _backward)


def reduce_sum(x: Variable, axes: Axes = None, keepdims: bool = False) -> Variable:
    return reduce('sum', x, axes, keepdims)


def reduce_mean(x: Variable, axes: Axes = None, keepdims: bool = False) -> Variable:
    return reduce('mean', x, axes, keepdims)


def reduce_min(x: Variable, axes: Axes = None, keepdims: bool = False) -> Variable:
    return reduce('min', x, axes, keepdims)


# ---------------------------------------------------------------------------
# Classification heads
# ---------------------------------------------------------------------------

def _check_logits(x: Variable, op: str) -> None:
    if x.ndim != 2:
        raise ShapeError(f"{op} expects [N, K] logits, got {x.shape}")
    if x.shape[1] < 2:
        raise ShapeError(f"{op} needs at least two classes, got K={x.shape[1]}")


def softmax_logits(x: Variable) -> Variable:
    """Row-wise softmax with max subtraction"""
    x = constant(x)
    _check_logits(x, 'softmax_logits')
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    value = exp / exp.sum(axis=1, keepdims=True)

    def _backward(g):
        return (value * (g - (g * value).sum(axis=1, keepdims=True)),)

    return apply_op('softmax', (x,), value, _backward)


def log_softmax(x: Variable) -> Variable:
    x = constant(x)
    _check_logits(x, 'log_softmax')
    shifted = x.value - x.value.max(axis=1, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(value)

    def _backward(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return apply_op('log_softmax', (x,), value, _backward)


def pick(x: Variable, labels: Iterable[int]) -> Variable:
    """x[i, labels[i]] for each row i"""
    x = constant(x)
    labels = np.asarray(labels, dtype=np.intp)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ShapeError(f"pick expects [N, K] values and N labels, got {x.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= x.shape[1]):
        raise LabelError(f"labels must lie in [0, {x.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    rows = np.arange(x.shape[0])
    value = x.value[rows, labels]

    def _backward(g):
        grad = np.zeros(x.shape, dtype=g.dtype)
        grad[rows, labels] = g
        return (grad,)

    return apply_op('pick', (x,), value, _backward)
