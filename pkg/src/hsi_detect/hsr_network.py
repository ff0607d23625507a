"""RGB → 31-band reconstruction network.

A cascade of U-shaped stages whose attention runs across channels: every
channel's flattened spatial map is one token, so the attention matrix of a
head is ``d × d`` with ``d = width / heads``. Tensors are channel-major and
may carry a leading batch axis.

Parameter names live under ``hsr/``::

    hsr/embed, hsr/lift, hsr/head                       input/output layers
    hsr/stage{s}/embed, hsr/stage{s}/out                stage convs
    hsr/stage{s}/enc{l}, .../bottleneck, .../dec{l}     attention + FFN blocks
    hsr/stage{s}/down{l}, .../up{l}, .../fuse{l}        resampling convs
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from typing_extensions import Self

from .custom_exceptions import ConfigError
from .custom_exceptions import ContractError
from .custom_exceptions import DimensionError
from .engine import ops
from .engine.layers import conv
from .engine.layers import depthwise
from .engine.layers import init_conv
from .engine.layers import init_depthwise
from .engine.layers import swap_last
from .engine.params import ParameterStore
from .engine.params import fan_in_uniform
from .engine.rng import stream
from .engine.tensor import Tensor
from .spectral_types import NUM_BANDS
from .spectral_types import RgbImage
from .spectral_types import SpectralImage

PREFIX = "hsr"
MRAE_EPS = 1e-3


class HsrConfig(BaseModel):
    """Geometry of the reconstruction network."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    stages: int = Field(default=2, ge=1, le=8)
    base_channels: int = Field(default=16, ge=2, le=256)
    heads: int = Field(default=2, ge=1)
    depth: int = Field(default=2, ge=1, le=5)
    positional_branch: bool = True

    @model_validator(mode="after")
    def _heads_divide_width(self) -> Self:
        # widths are base·2^level, so dividing the base width suffices
        if self.base_channels % self.heads != 0:
            raise ValueError(
                f"heads ({self.heads}) must divide base_channels ({self.base_channels})"
            )
        return self

    @property
    def divisor(self) -> int:
        return 2**self.depth

    def widths(self) -> list[int]:
        """Attention widths from the top level down to the bottleneck."""
        return [self.base_channels * 2**level for level in range(self.depth + 1)]


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def _init_attention(
    store: ParameterStore, rng: np.random.Generator, name: str, width: int, cfg: HsrConfig
) -> None:
    for proj in ("q", "k", "v"):
        store.add(f"{name}/{proj}", fan_in_uniform(rng, (width, width), width))
    store.add(f"{name}/temperature", np.ones(cfg.heads))
    store.add(f"{name}/proj/w", np.zeros((width, width)))
    store.add(f"{name}/proj/b", np.zeros(width))
    if cfg.positional_branch:
        init_depthwise(store, rng, f"{name}/pos1", width)
        init_depthwise(store, rng, f"{name}/pos2", width)


def _init_block(
    store: ParameterStore, rng: np.random.Generator, name: str, width: int, cfg: HsrConfig
) -> None:
    _init_attention(store, rng, f"{name}/attn", width, cfg)
    init_conv(store, rng, f"{name}/ffn1", 2 * width, width, 1)
    init_depthwise(store, rng, f"{name}/ffn_dw", 2 * width)
    init_conv(store, rng, f"{name}/ffn2", width, 2 * width, 1)


def _init_stage(store: ParameterStore, rng: np.random.Generator, name: str, cfg: HsrConfig) -> None:
    widths = cfg.widths()
    init_conv(store, rng, f"{name}/embed", widths[0], widths[0], 3, bias=False)
    for level in range(cfg.depth):
        _init_block(store, rng, f"{name}/enc{level}", widths[level], cfg)
        init_conv(store, rng, f"{name}/down{level}", widths[level + 1], widths[level], 3, bias=False)
    _init_block(store, rng, f"{name}/bottleneck", widths[-1], cfg)
    for level in reversed(range(cfg.depth)):
        init_conv(store, rng, f"{name}/up{level}", widths[level], widths[level + 1], 1, bias=False)
        init_conv(store, rng, f"{name}/fuse{level}", widths[level], 2 * widths[level], 1, bias=False)
        _init_block(store, rng, f"{name}/dec{level}", widths[level], cfg)
    init_conv(store, rng, f"{name}/out", widths[0], widths[0], 3, bias=False, zero=True)


def init_hsr_params(cfg: HsrConfig, seed: int) -> ParameterStore:
    """Fan-in uniform weights; attention projections and stage outputs start at zero."""
    rng = stream(seed, "init/hsr")
    store = ParameterStore()
    init_conv(store, rng, f"{PREFIX}/embed", cfg.base_channels, 3, 3)
    for s in range(cfg.stages):
        _init_stage(store, rng, f"{PREFIX}/stage{s}", cfg)
    init_conv(store, rng, f"{PREFIX}/head", NUM_BANDS, cfg.base_channels, 3)
    init_conv(store, rng, f"{PREFIX}/lift", NUM_BANDS, 3, 1)
    return store


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def spectral_attention(
    x: Tensor,
    params: Mapping[str, Tensor],
    heads: int,
    name: str,
    positional_branch: bool = True,
    trace: list[np.ndarray] | None = None,
) -> Tensor:
    """Channel-token self-attention with residual.

    Per head, ``A = softmax_axis0(τ · K̂ Q̂ᵀ)`` where ``K̂``/``Q̂`` hold the
    head's tokens L2-normalised over space; column ``j`` of ``A`` weights the
    value tokens mixed into output token ``j``. When ``trace`` is given, the
    attention matrices are appended to it.
    """
    channels = x.shape[-3]
    if channels % heads != 0:
        raise ConfigError(f"{heads} heads do not divide {channels} channels")
    lead = x.shape[:-3]
    h, w = x.shape[-2:]
    d = channels // heads

    tokens = ops.reshape(x, lead + (channels, h * w))
    q = ops.matmul(params[f"{name}/q"], tokens)
    k = ops.matmul(params[f"{name}/k"], tokens)
    v = ops.matmul(params[f"{name}/v"], tokens)

    def split(t: Tensor) -> Tensor:
        return ops.reshape(t, lead + (heads, d, h * w))

    q_hat = ops.l2_normalize(split(q), axis=-1)
    k_hat = ops.l2_normalize(split(k), axis=-1)
    temperature = ops.reshape(params[f"{name}/temperature"], (heads, 1, 1))
    attn = ops.softmax(temperature * ops.matmul(k_hat, swap_last(q_hat)), axis=-2)
    if trace is not None:
        trace.append(attn.data.copy())

    mixed = ops.reshape(ops.matmul(swap_last(attn), split(v)), lead + (channels, h * w))
    projected = ops.matmul(params[f"{name}/proj/w"], mixed) + ops.reshape(
        params[f"{name}/proj/b"], (channels, 1)
    )
    out = x + ops.reshape(projected, x.shape)
    if positional_branch:
        v_map = ops.reshape(v, x.shape)
        out = out + depthwise(ops.gelu(depthwise(v_map, params, f"{name}/pos1")), params, f"{name}/pos2")
    return out


def _feed_forward(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    hidden = ops.gelu(conv(x, params, f"{name}/ffn1"))
    hidden = ops.gelu(depthwise(hidden, params, f"{name}/ffn_dw"))
    return x + conv(hidden, params, f"{name}/ffn2")


def _block(
    x: Tensor,
    params: Mapping[str, Tensor],
    name: str,
    cfg: HsrConfig,
    trace: list[np.ndarray] | None,
) -> Tensor:
    x = spectral_attention(x, params, cfg.heads, f"{name}/attn", cfg.positional_branch, trace)
    return _feed_forward(x, params, name)


def check_extent(height: int, width: int, cfg: HsrConfig) -> None:
    if height % cfg.divisor or width % cfg.divisor:
        raise DimensionError(
            f"spatial extent {height}×{width} must be divisible by 2^depth = {cfg.divisor}"
        )


def sst_forward(
    x: Tensor,
    params: Mapping[str, Tensor],
    cfg: HsrConfig,
    name: str = f"{PREFIX}/stage0",
    trace: list[np.ndarray] | None = None,
) -> Tensor:
    """One U-shaped stage; with a zero output conv it is exactly the identity."""
    check_extent(x.shape[-2], x.shape[-1], cfg)
    h = conv(x, params, f"{name}/embed")
    skips = []
    for level in range(cfg.depth):
        h = _block(h, params, f"{name}/enc{level}", cfg, trace)
        skips.append(h)
        h = conv(h, params, f"{name}/down{level}", stride=2)
    h = _block(h, params, f"{name}/bottleneck", cfg, trace)
    for level in reversed(range(cfg.depth)):
        h = conv(ops.nearest_upsample(h), params, f"{name}/up{level}")
        h = conv(ops.concat([h, skips[level]], axis=-3), params, f"{name}/fuse{level}")
        h = _block(h, params, f"{name}/dec{level}", cfg, trace)
    return x + conv(h, params, f"{name}/out")


def hsr_forward(rgb: Tensor, params: Mapping[str, Tensor], cfg: HsrConfig) -> Tensor:
    """Differentiable reconstruction of ``3×H×W`` (or ``N×3×H×W``) input."""
    if rgb.ndim not in (3, 4) or rgb.shape[-3] != 3:
        raise DimensionError(f"reconstruction input must be 3×H×W or N×3×H×W, got {rgb.shape}")
    check_extent(rgb.shape[-2], rgb.shape[-1], cfg)
    h = conv(rgb, params, f"{PREFIX}/embed")
    for s in range(cfg.stages):
        h = sst_forward(h, params, cfg, f"{PREFIX}/stage{s}")
    out = conv(h, params, f"{PREFIX}/head") + conv(rgb, params, f"{PREFIX}/lift")
    return ops.clamp(out, 0.0, 1.0)


def hsr_reconstruct(rgb: RgbImage, params: Mapping[str, Tensor], cfg: HsrConfig) -> SpectralImage:
    """Reconstruct a ``31×H×W`` cube from one RGB image."""
    return SpectralImage(hsr_forward(Tensor.wrap(rgb.data), params, cfg).data)


def hsr_reconstruct_batch(
    rgb: np.ndarray, params: Mapping[str, Tensor], cfg: HsrConfig, batch_size: int = 8
) -> np.ndarray:
    """Reconstruct an ``N×3×H×W`` array in chunks; no tape is recorded."""
    chunks = [
        hsr_forward(Tensor.wrap(rgb[i : i + batch_size]), params, cfg).data
        for i in range(0, len(rgb), batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, NUM_BANDS) + rgb.shape[-2:])


def mrae_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean of ``|pred - target| / (target + 1e-3)``; asymmetric in its arguments."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mrae: prediction {pred.shape} and target {target.shape} differ")
    if np.any(target < 0):
        raise ContractError("mrae target must be non-negative")
    return ops.mean(ops.abs(pred - target) / (target + MRAE_EPS))


def mrae(pred: SpectralImage, target: SpectralImage) -> float:
    return mrae_loss(Tensor.wrap(pred.data), target.data).item()
