"""Disentangling manipulation detector.

Two parallel strided encoders split an input into a content map and a
fingerprint map; the fingerprint is further split into channels shared by
all manipulation families (``common``, read by the real/fake head) and
family-specific channels (``specific``, read by the family head). A decoder
rebuilds images from content, conditioned on style statistics predicted from
a fingerprint through adaptive instance normalisation, which makes
cross-reconstruction (content of one sample, fingerprint of another)
possible.

All functions accept ``C×H×W`` or batched ``N×C×H×W`` tensors.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from typing_extensions import Self

from .custom_exceptions import DimensionError
from .engine import ops
from .engine.layers import conv
from .engine.layers import init_conv
from .engine.layers import init_linear
from .engine.layers import linear
from .engine.params import ParameterStore
from .engine.rng import stream
from .engine.tensor import Tensor
from .spectral_types import NUM_BANDS
from .spectral_types import ManipulationKind

PREFIX = "det"
STD_EPS = 1e-5


class DetectorConfig(BaseModel):
    """Geometry of the detector."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input: Literal["hsi", "rgb"] = "hsi"
    hsi_source: Literal["reconstructed", "measured"] = "reconstructed"
    stem_channels: int = Field(default=32, ge=1)
    feature_channels: int = Field(default=64, ge=2)
    common_channels: int = Field(default=32, ge=1)
    specific_channels: int = Field(default=32, ge=1)
    num_classes: int = Field(default=len(ManipulationKind), ge=1)

    @model_validator(mode="after")
    def _split_is_partition(self) -> Self:
        if self.common_channels + self.specific_channels != self.feature_channels:
            raise ValueError(
                "common_channels + specific_channels must equal feature_channels "
                f"({self.common_channels} + {self.specific_channels} != {self.feature_channels})"
            )
        return self

    @property
    def in_channels(self) -> int:
        return NUM_BANDS if self.input == "hsi" else 3

    @property
    def adain_widths(self) -> tuple[int, int]:
        """Widths of the two AdaIN sites in decoding order."""
        return self.feature_channels, self.stem_channels

    @property
    def style_length(self) -> int:
        return sum(self.adain_widths)


@dataclass(frozen=True)
class StyleStats:
    """Per-channel target mean and standard deviation for AdaIN."""

    mu: Tensor
    sigma: Tensor

    def slice(self, start: int, stop: int) -> StyleStats:
        index = (Ellipsis, slice(start, stop))
        return StyleStats(ops.getitem(self.mu, index), ops.getitem(self.sigma, index))

    @property
    def length(self) -> int:
        return int(self.mu.shape[-1])


@dataclass(frozen=True)
class FingerprintFeature:
    """Fingerprint map split along channels into common and specific parts."""

    full: Tensor
    common: Tensor
    specific: Tensor


@dataclass(frozen=True)
class DetectorOutput:
    binary_logits: Tensor
    specific_logits: Tensor
    content: Tensor
    fingerprint: FingerprintFeature
    style: StyleStats
    self_recon: Tensor
    cross_recon: Tensor | None = None


def init_detector_params(cfg: DetectorConfig, seed: int) -> ParameterStore:
    rng = stream(seed, "init/detector")
    store = ParameterStore()
    for encoder in ("content", "fingerprint"):
        init_conv(store, rng, f"{PREFIX}/{encoder}/conv1", cfg.stem_channels, cfg.in_channels, 3)
        init_conv(store, rng, f"{PREFIX}/{encoder}/conv2", cfg.feature_channels, cfg.stem_channels, 3)
    init_linear(store, rng, f"{PREFIX}/style", 2 * cfg.style_length, cfg.feature_channels)
    init_conv(store, rng, f"{PREFIX}/dec/conv1", cfg.stem_channels, cfg.feature_channels, 3)
    init_conv(store, rng, f"{PREFIX}/dec/conv2", cfg.stem_channels, cfg.stem_channels, 3)
    init_conv(store, rng, f"{PREFIX}/dec/out", cfg.in_channels, cfg.stem_channels, 3)
    init_linear(store, rng, f"{PREFIX}/head/binary", 2, cfg.common_channels)
    init_linear(store, rng, f"{PREFIX}/head/specific", cfg.num_classes, cfg.specific_channels)
    return store


def channel_stats(x: Tensor, eps: float = STD_EPS) -> tuple[Tensor, Tensor]:
    """Spatial mean and ``max(σ, eps)`` per channel (population variance)."""
    mu = ops.mean(x, axis=(-2, -1))
    sigma = ops.maximum(ops.sqrt(ops.variance(x, axis=(-2, -1))), eps)
    return mu, sigma


def adain(x: Tensor, style: StyleStats, eps: float = STD_EPS) -> Tensor:
    """``σ_y · (x − μ(x)) / max(σ(x), eps) + μ_y`` per channel."""
    channels = x.shape[-3]
    if style.length != channels:
        raise DimensionError(f"AdaIN style has {style.length} channels, features have {channels}")
    mu_x, sigma_x = channel_stats(x, eps)
    normalized = (x - ops.reshape(mu_x, mu_x.shape + (1, 1))) / ops.reshape(
        sigma_x, sigma_x.shape + (1, 1)
    )
    shape = style.mu.shape + (1, 1)
    return ops.reshape(style.sigma, shape) * normalized + ops.reshape(style.mu, shape)


def _check_input(x: Tensor, cfg: DetectorConfig) -> None:
    if x.ndim not in (3, 4) or x.shape[-3] != cfg.in_channels:
        raise DimensionError(
            f"detector expects {cfg.in_channels}-channel input, got shape {x.shape}"
        )
    if x.shape[-2] % 4 or x.shape[-1] % 4:
        raise DimensionError(f"detector input extent {x.shape[-2:]} must be divisible by 4")


def _encode(x: Tensor, params: Mapping[str, Tensor], encoder: str) -> Tensor:
    h = ops.relu(conv(x, params, f"{PREFIX}/{encoder}/conv1", stride=2))
    return ops.relu(conv(h, params, f"{PREFIX}/{encoder}/conv2", stride=2))


def encode_content(x: Tensor, params: Mapping[str, Tensor], cfg: DetectorConfig) -> Tensor:
    """``feature_channels × H/4 × W/4`` content map."""
    _check_input(x, cfg)
    return _encode(x, params, "content")


def encode_fingerprint(
    x: Tensor, params: Mapping[str, Tensor], cfg: DetectorConfig
) -> FingerprintFeature:
    _check_input(x, cfg)
    full = _encode(x, params, "fingerprint")
    split = cfg.common_channels
    rest = (slice(None), slice(None))
    return FingerprintFeature(
        full=full,
        common=ops.getitem(full, (Ellipsis, slice(0, split)) + rest),
        specific=ops.getitem(full, (Ellipsis, slice(split, None)) + rest),
    )


def style_from_fingerprint(
    fingerprint: FingerprintFeature, params: Mapping[str, Tensor], cfg: DetectorConfig
) -> StyleStats:
    """Pooled fingerprint → linear → ``(μ_y, softplus + ε)`` for every AdaIN site."""
    pooled = ops.global_avg_pool(ops.concat([fingerprint.common, fingerprint.specific], axis=-3))
    raw = linear(pooled, params, f"{PREFIX}/style")
    n = cfg.style_length
    mu = ops.getitem(raw, (Ellipsis, slice(0, n)))
    sigma = ops.softplus(ops.getitem(raw, (Ellipsis, slice(n, 2 * n)))) + STD_EPS
    return StyleStats(mu=mu, sigma=sigma)


def decode(
    content: Tensor,
    style: StyleStats,
    params: Mapping[str, Tensor],
    cfg: DetectorConfig,
    trace: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None,
) -> Tensor:
    """Two AdaIN-conditioned up-levels, then a sigmoid output conv.

    ``trace`` collects ``(activation, μ_y, σ_y)`` after every AdaIN site.
    """
    if style.length != cfg.style_length:
        raise DimensionError(
            f"style length {style.length} does not match AdaIN widths {cfg.adain_widths}"
        )
    h = content
    start = 0
    for level, width in enumerate(cfg.adain_widths, start=1):
        site = style.slice(start, start + width)
        start += width
        h = adain(h, site)
        if trace is not None:
            trace.append((h.data.copy(), site.mu.data.copy(), site.sigma.data.copy()))
        h = ops.relu(conv(ops.nearest_upsample(h), params, f"{PREFIX}/dec/conv{level}"))
    return ops.sigmoid(conv(h, params, f"{PREFIX}/dec/out"))


def classify(
    fingerprint: FingerprintFeature, params: Mapping[str, Tensor]
) -> tuple[Tensor, Tensor]:
    """Binary logits from ``common`` and family logits from ``specific``."""
    binary = linear(ops.global_avg_pool(fingerprint.common), params, f"{PREFIX}/head/binary")
    specific = linear(ops.global_avg_pool(fingerprint.specific), params, f"{PREFIX}/head/specific")
    return binary, specific


def forward_single(x: Tensor, params: Mapping[str, Tensor], cfg: DetectorConfig) -> DetectorOutput:
    content = encode_content(x, params, cfg)
    fingerprint = encode_fingerprint(x, params, cfg)
    style = style_from_fingerprint(fingerprint, params, cfg)
    binary, specific = classify(fingerprint, params)
    return DetectorOutput(
        binary_logits=binary,
        specific_logits=specific,
        content=content,
        fingerprint=fingerprint,
        style=style,
        self_recon=decode(content, style, params, cfg),
    )


def forward_pair(
    a: Tensor, b: Tensor, params: Mapping[str, Tensor], cfg: DetectorConfig
) -> tuple[DetectorOutput, DetectorOutput]:
    """Encode both inputs; cross-reconstruct each content with the other's style."""
    if a.shape != b.shape:
        raise DimensionError(f"paired inputs differ in shape: {a.shape} vs {b.shape}")
    out_a = forward_single(a, params, cfg)
    out_b = forward_single(b, params, cfg)
    cross_a = decode(out_a.content, out_b.style, params, cfg)
    cross_b = decode(out_b.content, out_a.style, params, cfg)
    return _with_cross(out_a, cross_a), _with_cross(out_b, cross_b)


def _with_cross(out: DetectorOutput, cross: Tensor) -> DetectorOutput:
    return DetectorOutput(
        binary_logits=out.binary_logits,
        specific_logits=out.specific_logits,
        content=out.content,
        fingerprint=out.fingerprint,
        style=out.style,
        self_recon=out.self_recon,
        cross_recon=cross,
    )


def binary_logits(x: Tensor, params: Mapping[str, Tensor], cfg: DetectorConfig) -> Tensor:
    """Real/fake logits only; skips the content branch and decoder."""
    return classify(encode_fingerprint(x, params, cfg), params)[0]


def score_samples(
    params: Mapping[str, Tensor], cfg: DetectorConfig, inputs: np.ndarray, batch_size: int = 32
) -> np.ndarray:
    """Softmax probability of the fake class per sample; no tape is recorded."""
    scores = []
    for start in range(0, len(inputs), batch_size):
        logits = binary_logits(Tensor.wrap(inputs[start : start + batch_size]), params, cfg)
        scores.append(ops.softmax(logits, axis=-1).data[..., 1])
    return np.concatenate(scores) if scores else np.zeros(0)
