"""Planted manipulation artifacts for synthetic spectral scenes.

Each family edits the cube only inside a smooth region mask:

* ``BandNotch`` attenuates a Gaussian-windowed range of bands, which RGB
  projection largely averages away;
* ``HighFreqGrid`` adds a pixel-period checkerboard to a few random bands;
* ``BandShuffleNoise`` adds independent per-band noise, breaking inter-band
  correlation.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from typing_extensions import Self

from .custom_exceptions import ConfigError
from .engine.rng import stream
from .spectral_types import BAND_WAVELENGTHS
from .spectral_types import NUM_BANDS
from .spectral_types import ManipulationKind
from .spectral_types import SpectralImage
from .synthetic_data import smooth_field

logger = logging.getLogger(__name__)


class ManipulationParams(BaseModel):
    """Per-family parameters with their allowed ranges.

    Attributes
    ----------
    notch_center_nm: float
        Centre of the BandNotch window (400–700 nm).
    notch_width_bands: int
        Half-width of the window in bands; the Gaussian taper has
        σ = width/2 bands.
    notch_depth: float
        Attenuation at the window centre (0 leaves the cube unchanged).
    grid_amplitude: float
        Checkerboard amplitude for HighFreqGrid.
    grid_bands: int
        Number of randomly chosen bands receiving the grid.
    grid_period: int
        Checkerboard period in pixels (even).
    noise_sigma: float
        Standard deviation of BandShuffleNoise.
    region_fraction_min, region_fraction_max: float
        Range from which each sample's mask coverage is drawn.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    notch_center_nm: float = Field(default=550.0, ge=400.0, le=700.0)
    notch_width_bands: int = Field(default=2, ge=1, le=5)
    notch_depth: float = Field(default=0.3, ge=0.0, le=1.0)
    grid_amplitude: float = Field(default=0.03, ge=0.0, le=0.2)
    grid_bands: int = Field(default=8, ge=1, le=NUM_BANDS)
    grid_period: int = Field(default=2, ge=2, le=16)
    noise_sigma: float = Field(default=0.02, ge=0.0, le=0.2)
    region_fraction_min: float = Field(default=0.05, ge=0.05, le=0.25)
    region_fraction_max: float = Field(default=0.25, ge=0.05, le=0.25)

    @model_validator(mode="after")
    def _check_ranges(self) -> Self:
        if self.grid_period % 2 != 0:
            raise ValueError("grid_period must be even")
        if self.region_fraction_min > self.region_fraction_max:
            raise ValueError("region_fraction_min exceeds region_fraction_max")
        return self


DEFAULT_PARAMS = ManipulationParams()


def parse_kind(kind: ManipulationKind | str) -> ManipulationKind:
    """Resolve a kind given by enum member or its name."""
    if isinstance(kind, ManipulationKind):
        return kind
    try:
        return ManipulationKind(kind)
    except ValueError as exc:
        names = ", ".join(k.value for k in ManipulationKind)
        raise ConfigError(f"unknown manipulation kind '{kind}' (expected one of: {names})") from exc


def region_mask(height: int, width: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask of the ``fraction`` highest pixels of a smooth random field."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"mask fraction must lie in (0, 1], got {fraction}")
    field = smooth_field(rng, height, width, waves=3, max_cycles=1.5)
    count = max(1, int(round(fraction * height * width)))
    order = np.argsort(field, axis=None, kind="stable")[::-1][:count]
    mask = np.zeros(height * width, dtype=bool)
    mask[order] = True
    return mask.reshape(height, width)


def notch_window(params: ManipulationParams) -> tuple[np.ndarray, np.ndarray]:
    """Band indices inside the notch window and their Gaussian weights."""
    center = (params.notch_center_nm - BAND_WAVELENGTHS[0]) / (BAND_WAVELENGTHS[1] - BAND_WAVELENGTHS[0])
    offsets = np.arange(NUM_BANDS) - center
    inside = np.flatnonzero(np.abs(offsets) <= params.notch_width_bands)
    sigma = params.notch_width_bands / 2.0
    weights = np.exp(-0.5 * (offsets[inside] / sigma) ** 2)
    return inside, weights


def _band_notch(cube: np.ndarray, mask: np.ndarray, params: ManipulationParams) -> np.ndarray:
    bands, weights = notch_window(params)
    out = cube.copy()
    factor = 1.0 - params.notch_depth * weights[:, None, None] * mask[None]
    out[bands] = np.clip(cube[bands] * factor, 0.0, 1.0)
    return out


def _high_freq_grid(
    cube: np.ndarray, mask: np.ndarray, params: ManipulationParams, rng: np.random.Generator
) -> np.ndarray:
    bands = np.sort(rng.choice(NUM_BANDS, size=params.grid_bands, replace=False))
    half = params.grid_period // 2
    rows = np.arange(cube.shape[1]) // half
    cols = np.arange(cube.shape[2]) // half
    checker = np.where((rows[:, None] + cols[None, :]) % 2 == 0, 1.0, -1.0)
    out = cube.copy()
    out[bands] = np.clip(cube[bands] + params.grid_amplitude * checker * mask, 0.0, 1.0)
    return out


def _band_shuffle_noise(
    cube: np.ndarray, mask: np.ndarray, params: ManipulationParams, rng: np.random.Generator
) -> np.ndarray:
    noise = rng.normal(0.0, params.noise_sigma, size=cube.shape)
    return np.clip(cube + noise * mask[None], 0.0, 1.0)


def _is_null(kind: ManipulationKind, params: ManipulationParams) -> bool:
    strength = {
        ManipulationKind.band_notch: params.notch_depth,
        ManipulationKind.high_freq_grid: params.grid_amplitude,
        ManipulationKind.band_shuffle_noise: params.noise_sigma,
    }[kind]
    return strength == 0.0


def apply_manipulation(
    img: SpectralImage,
    kind: ManipulationKind | str,
    seed: int,
    params: ManipulationParams | None = None,
) -> SpectralImage:
    """Plant one manipulation artifact, deterministic in ``seed``.

    Zero strength (depth, amplitude or σ) returns the input unchanged.
    """
    kind = parse_kind(kind)
    params = params or DEFAULT_PARAMS
    if _is_null(kind, params):
        return SpectralImage(img.data.copy())

    mask_rng = stream(seed, "manipulation/mask")
    fraction = mask_rng.uniform(params.region_fraction_min, params.region_fraction_max)
    mask = region_mask(img.height, img.width, fraction, mask_rng)
    rng = stream(seed, f"manipulation/{kind.value}")
    logger.debug(
        "planting %s", kind.value, extra={"mask_fraction": float(mask.mean()), "manip_seed": seed}
    )

    if kind is ManipulationKind.band_notch:
        cube = _band_notch(img.data, mask, params)
    elif kind is ManipulationKind.high_freq_grid:
        cube = _high_freq_grid(img.data, mask, params, rng)
    else:
        cube = _band_shuffle_noise(img.data, mask, params, rng)
    return SpectralImage(cube)
