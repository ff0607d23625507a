"""Differentiable primitives.

Every function takes Tensors (python scalars and arrays are lifted to
constants), computes its result with numpy, and registers its local backward
rule through ``record``. Binary elementwise ops broadcast like numpy and
reduce gradients back to each operand's shape.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Any

import numpy as np

from ..custom_exceptions import ContractError
from ..custom_exceptions import DimensionError
from .tensor import Tensor
from .tensor import as_tensor
from .tensor import record

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes that numpy broadcasting expanded."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def _normalize_axis(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for a {ndim}-d tensor")
        normalized.append(ax % ndim)
    return tuple(sorted(normalized))


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return record(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data
    return record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        ),
    )


def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,))


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record(out, (a,), lambda g: (g * out,))


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    return record(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Any) -> Tensor:
    """Square root; the gradient at 0 is taken as 0."""
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return record(out, (a,), backward)


def abs(a: Any) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def relu(a: Any) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def gelu(a: Any) -> Tensor:
    """GELU with the tanh approximation."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_K * (x + _GELU_C * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        d_inner = _GELU_K * (1.0 + 3.0 * _GELU_C * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner),)

    return record(out, (a,), backward)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Any) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return record(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Any) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    slope = _stable_sigmoid(x)
    return record(out, (a,), lambda g: (g * slope,))


def maximum(a: Any, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)`` against a constant."""
    a = as_tensor(a)
    mask = a.data > floor
    return record(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,))


def clamp(a: Any, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= low) & (a.data <= high)
    return record(np.clip(a.data, low, high), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum(a: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.asarray(out, dtype=np.float64), (a,), backward)


def mean(a: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return record(np.asarray(out, dtype=np.float64), (a,), backward)


def variance(a: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Population variance (divides by N)."""
    a = as_tensor(a)
    axes = _normalize_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    centered = a.data - a.data.mean(axis=axes, keepdims=True)
    out = (centered**2).mean(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (g * 2.0 * centered / count,)

    return record(np.asarray(out, dtype=np.float64), (a,), backward)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from exc
    return record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Any, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    order = tuple(reversed(range(a.ndim))) if axes is None else tuple(ax % a.ndim for ax in axes)
    if sorted(order) != list(range(a.ndim)):
        raise DimensionError(f"transpose: {tuple(axes or ())} is not a permutation of {a.ndim} axes")
    inverse = tuple(np.argsort(order))
    return record(a.data.transpose(order), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    ndim = parts[0].ndim
    ax = _normalize_axis(axis, ndim)[0]
    for part in parts[1:]:
        if part.ndim != ndim or any(
            part.shape[i] != parts[0].shape[i] for i in range(ndim) if i != ax
        ):
            raise DimensionError(
                f"concat: shapes {[p.shape for p in parts]} differ outside axis {axis}"
            )
    sizes = [p.shape[ax] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([p.data for p in parts], axis=ax)
    return record(out, parts, lambda g: tuple(np.split(g, splits, axis=ax)))


def getitem(a: Any, index: Any) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(a.shape)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return record(np.array(out, dtype=np.float64), (a,), backward)


def nearest_upsample(a: Any) -> Tensor:
    """Nearest-neighbour ×2 upsampling over the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"nearest_upsample needs at least 2 axes, got shape {a.shape}")
    out = np.repeat(np.repeat(a.data, 2, axis=-2), 2, axis=-1)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        h, w = a.shape[-2:]
        return (g.reshape(a.shape[:-2] + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return record(out, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra, normalisation
# ---------------------------------------------------------------------------


def matmul(a: Any, b: Any) -> Tensor:
    """Matrix product; leading axes broadcast as batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not conformable")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from exc

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record(out, (a, b), backward)


def softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    ax = _normalize_axis(axis, a.ndim)[0]
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=ax, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return record(out, (a,), backward)


def log_softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    ax = _normalize_axis(axis, a.ndim)[0]
    shifted = a.data - a.data.max(axis=ax, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=ax, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=ax, keepdims=True),)

    return record(out, (a,), backward)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv_output_extent(extent: int, kernel: int, stride: int, pad: int) -> int:
    """Output extent of a strided, zero-padded cross-correlation.

    The division is floored; the remainder may only drop trailing padding.
    A remainder larger than ``pad`` would leave real input pixels unvisited
    and is rejected.
    """
    if kernel % 2 == 0:
        raise DimensionError(f"kernel extent must be odd, got {kernel}")
    if stride < 1 or pad < 0:
        raise DimensionError(f"invalid stride {stride} or padding {pad}")
    span = extent + 2 * pad - kernel
    if span < 0:
        raise DimensionError(f"kernel {kernel} larger than padded extent {extent + 2 * pad}")
    if span % stride > pad:
        raise DimensionError(
            f"output extent ({extent} + 2*{pad} - {kernel})/{stride} + 1 is not integral"
        )
    return span // stride + 1


def _pad_spatial(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(x, widths)


def conv2d(x: Any, kernel: Any, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``Cin×H×W`` (or ``N×Cin×H×W``) with ``Cout×Cin×kh×kw``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim not in (3, 4) or kernel.ndim != 4 or x.shape[-3] != kernel.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} does not match kernel {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    h, w = x.shape[-2:]
    h_out = conv_output_extent(h, kh, stride, pad)
    w_out = conv_output_extent(w, kw, stride, pad)
    batch = x.shape[:-3]

    xp = _pad_spatial(x.data, pad)
    cols = np.empty((c_in, kh, kw) + batch + (h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            window = xp[..., i : i + stride * (h_out - 1) + 1 : stride, j : j + stride * (w_out - 1) + 1 : stride]
            cols[:, i, j] = np.moveaxis(window, -3, 0)
    cols_2d = cols.reshape(c_in * kh * kw, -1)
    k_2d = kernel.data.reshape(c_out, -1)
    out = np.moveaxis((k_2d @ cols_2d).reshape((c_out,) + batch + (h_out, w_out)), 0, -3)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g_2d = np.moveaxis(g, -3, 0).reshape(c_out, -1)
        grad_k = (g_2d @ cols_2d.T).reshape(kernel.shape)
        grad_cols = (k_2d.T @ g_2d).reshape((c_in, kh, kw) + batch + (h_out, w_out))
        grad_xp = np.zeros(xp.shape)
        for i in range(kh):
            for j in range(kw):
                grad_xp[..., i : i + stride * (h_out - 1) + 1 : stride, j : j + stride * (w_out - 1) + 1 : stride] += np.moveaxis(grad_cols[:, i, j], 0, -3)
        grad_x = grad_xp[..., pad : pad + h, pad : pad + w] if pad else grad_xp
        return grad_x, grad_k

    return record(out, (x, kernel), backward)


def depthwise_conv2d(x: Any, kernel: Any, pad: int = 1) -> Tensor:
    """Per-channel stride-1 cross-correlation with a ``C×kh×kw`` kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim not in (3, 4) or kernel.ndim != 3 or x.shape[-3] != kernel.shape[0]:
        raise DimensionError(
            f"depthwise_conv2d: input {x.shape} does not match kernel {kernel.shape}"
        )
    _, kh, kw = kernel.shape
    h, w = x.shape[-2:]
    h_out = conv_output_extent(h, kh, 1, pad)
    w_out = conv_output_extent(w, kw, 1, pad)
    xp = _pad_spatial(x.data, pad)
    out = np.zeros(x.shape[:-2] + (h_out, w_out))
    for i in range(kh):
        for j in range(kw):
            out += kernel.data[:, i, j, None, None] * xp[..., i : i + h_out, j : j + w_out]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_k = np.zeros(kernel.shape)
        grad_xp = np.zeros(xp.shape)
        reduce_axes = tuple(range(g.ndim - 3)) + (-2, -1)
        for i in range(kh):
            for j in range(kw):
                window = xp[..., i : i + h_out, j : j + w_out]
                grad_k[:, i, j] = (g * window).sum(axis=reduce_axes)
                grad_xp[..., i : i + h_out, j : j + w_out] += g * kernel.data[:, i, j, None, None]
        grad_x = grad_xp[..., pad : pad + h, pad : pad + w] if pad else grad_xp
        return grad_x, grad_k

    return record(out, (x, kernel), backward)


def global_avg_pool(x: Any) -> Tensor:
    """Mean over the last two (spatial) axes."""
    return mean(x, axis=(-2, -1))


def l2_normalize(a: Any, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    a = as_tensor(a)
    norm = sqrt(sum(a * a, axis=axis, keepdims=True))
    return a / (norm + eps)


def ensure_scalar(loss: Tensor) -> Tensor:
    if loss.size != 1:
        raise ContractError(f"expected a scalar, got shape {loss.shape}")
    return loss
