"""Parameterised layers shared by both networks.

A layer is a naming convention over a ``ParameterStore``: ``<name>/w`` and an
optional ``<name>/b``. The ``init_*`` helpers add the entries, the forward
helpers read them.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from . import ops
from .params import ParameterStore
from .params import fan_in_uniform
from .tensor import Tensor


def init_conv(
    store: ParameterStore,
    rng: np.random.Generator,
    name: str,
    c_out: int,
    c_in: int,
    kernel: int,
    *,
    bias: bool = True,
    zero: bool = False,
) -> None:
    shape = (c_out, c_in, kernel, kernel)
    fan_in = c_in * kernel * kernel
    store.add(f"{name}/w", np.zeros(shape) if zero else fan_in_uniform(rng, shape, fan_in))
    if bias:
        store.add(f"{name}/b", np.zeros(c_out))


def init_depthwise(store: ParameterStore, rng: np.random.Generator, name: str, channels: int) -> None:
    store.add(f"{name}/w", fan_in_uniform(rng, (channels, 3, 3), 9))


def init_linear(
    store: ParameterStore, rng: np.random.Generator, name: str, n_out: int, n_in: int
) -> None:
    store.add(f"{name}/w", fan_in_uniform(rng, (n_out, n_in), n_in))
    store.add(f"{name}/b", np.zeros(n_out))


def conv(x: Tensor, params: Mapping[str, Tensor], name: str, stride: int = 1) -> Tensor:
    """Same-padded convolution (odd kernels) plus optional bias."""
    kernel = params[f"{name}/w"]
    out = ops.conv2d(x, kernel, stride=stride, pad=kernel.shape[-1] // 2)
    bias_name = f"{name}/b"
    if bias_name in params:
        out = out + ops.reshape(params[bias_name], (-1, 1, 1))
    return out


def depthwise(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    return ops.depthwise_conv2d(x, params[f"{name}/w"], pad=1)


def linear(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    """``x @ Wᵀ + b`` over the last axis."""
    weight = params[f"{name}/w"]
    out = ops.matmul(x if x.ndim > 1 else ops.reshape(x, (1, -1)), ops.transpose(weight))
    out = out + params[f"{name}/b"]
    return out if x.ndim > 1 else ops.reshape(out, (-1,))


def swap_last(x: Tensor) -> Tensor:
    """Transpose the last two axes."""
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return ops.transpose(x, axes)
