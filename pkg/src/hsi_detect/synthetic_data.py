"""Synthetic spectral scenes.

A scene mixes 2–6 materials with smooth per-pixel abundances (a softmax over
low-frequency random fields, so abundances lie on the simplex) under a
smooth illumination field. Material signatures are sums of wide Gaussian
bumps over wavelength, which keeps every spectrum smooth across bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .custom_exceptions import ConfigError
from .engine.rng import stream
from .spectral_types import BAND_WAVELENGTHS
from .spectral_types import SpectralImage

MIN_MATERIALS = 2
MAX_MATERIALS = 6
SIGNATURE_CEILING = 0.95


@dataclass(frozen=True)
class Material:
    """A reflectance-like signature over the 31-band grid."""

    id: int
    signature: np.ndarray


def smooth_field(
    rng: np.random.Generator,
    height: int,
    width: int | None = None,
    waves: int = 4,
    max_cycles: float = 2.0,
) -> np.ndarray:
    """Zero-mean, unit-std random field built from a few low-frequency waves."""
    width = height if width is None else width
    yy, xx = np.meshgrid(
        np.arange(height, dtype=np.float64) / height,
        np.arange(width, dtype=np.float64) / width,
        indexing="ij",
    )
    field = np.zeros((height, width))
    for _ in range(waves):
        u, v = rng.uniform(-max_cycles, max_cycles, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amplitude = rng.uniform(0.5, 1.0)
        field += amplitude * np.cos(2.0 * np.pi * (u * yy + v * xx) + phase)
    std = field.std()
    return (field - field.mean()) / (std if std > 0 else 1.0)


def random_material(rng: np.random.Generator, material_id: int) -> Material:
    """Baseline plus 1–3 Gaussian bumps, scaled to stay below 0.95."""
    n_bumps = int(rng.integers(1, 4))
    baseline = rng.uniform(0.02, 0.15)
    amplitudes = [rng.uniform(0.3, 0.7)] + [rng.uniform(0.15, 0.7) for _ in range(n_bumps - 1)]
    signature = np.full(BAND_WAVELENGTHS.shape, baseline)
    for amplitude in amplitudes:
        center = rng.uniform(420.0, 680.0)
        width = rng.uniform(35.0, 90.0)
        signature += amplitude * np.exp(-0.5 * ((BAND_WAVELENGTHS - center) / width) ** 2)
    scale = min(1.0, SIGNATURE_CEILING / signature.max())
    return Material(id=material_id, signature=signature * scale)


def _validate_scene_args(size: int, n_materials: int) -> None:
    if size < 4 or size % 4 != 0:
        raise ConfigError(f"scene size must be a positive multiple of 4, got {size}")
    if not MIN_MATERIALS <= n_materials <= MAX_MATERIALS:
        raise ConfigError(
            f"n_materials must lie in [{MIN_MATERIALS}, {MAX_MATERIALS}], got {n_materials}"
        )


def scene_components(
    seed: int, size: int, n_materials: int
) -> tuple[list[Material], np.ndarray, np.ndarray]:
    """Materials, ``n_materials×size×size`` abundances and the illumination field."""
    _validate_scene_args(size, n_materials)
    rng = stream(seed, "scene")
    materials = [random_material(rng, i) for i in range(n_materials)]

    sharpness = rng.uniform(1.5, 3.0)
    logits = np.stack([sharpness * smooth_field(rng, size) for _ in range(n_materials)])
    logits -= logits.max(axis=0, keepdims=True)
    weights = np.exp(logits)
    abundances = weights / weights.sum(axis=0, keepdims=True)

    illumination = 0.85 + 0.15 * np.tanh(0.5 * smooth_field(rng, size, waves=2, max_cycles=1.0))
    return materials, abundances, illumination


def synth_scene(seed: int, size: int, n_materials: int) -> SpectralImage:
    """Generate one synthetic 31-band scene, deterministic in ``seed``."""
    materials, abundances, illumination = scene_components(seed, size, n_materials)
    signatures = np.stack([m.signature for m in materials])  # M×31
    cube = np.einsum("mb,mhw->bhw", signatures, abundances) * illumination[None]
    return SpectralImage(np.clip(cube, 0.0, 1.0))


def spectral_roughness(img: SpectralImage) -> float:
    """Mean absolute second difference across bands."""
    return float(np.abs(np.diff(img.data, n=2, axis=0)).mean())
