"""Spectral and RGB image types, the band grid, and RGB projection.

Images are stored channel-major (``bands × height × width``) as float64
arrays; the wavelength grid is fixed at 400–700 nm in 10 nm steps and is not
stored per image.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .custom_exceptions import DimensionError
from .custom_exceptions import LabelError

NUM_BANDS = 31
BAND_WAVELENGTHS = np.arange(400, 701, 10, dtype=np.float64)
RESPONSE_CENTERS_NM = (610.0, 540.0, 470.0)
RESPONSE_SIGMA_NM = 40.0


def _response_matrix() -> np.ndarray:
    rows = np.exp(
        -0.5 * ((BAND_WAVELENGTHS[None, :] - np.array(RESPONSE_CENTERS_NM)[:, None]) / RESPONSE_SIGMA_NM) ** 2
    )
    return rows / rows.sum(axis=1, keepdims=True)


# 3×31 camera response: Gaussian R/G/B bumps, each row summing to 1.
RESPONSE_MATRIX = _response_matrix()
RESPONSE_MATRIX.setflags(write=False)


def band_index(wavelength_nm: float) -> int:
    """Index of the band nearest to ``wavelength_nm``."""
    return int(np.argmin(np.abs(BAND_WAVELENGTHS - wavelength_nm)))


@dataclass(frozen=True)
class SpectralImage:
    """31-band radiance cube, band-major, values nominally in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        array = np.asarray(self.data, dtype=np.float64)
        if array.ndim != 3 or array.shape[0] != NUM_BANDS:
            raise DimensionError(f"spectral image must be 31×H×W, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise DimensionError("spectral image contains non-finite values")
        object.__setattr__(self, "data", array)

    @property
    def bands(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])


@dataclass(frozen=True)
class RgbImage:
    """Three-channel image, channel-major, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        array = np.asarray(self.data, dtype=np.float64)
        if array.ndim != 3 or array.shape[0] != 3:
            raise DimensionError(f"RGB image must be 3×H×W, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise DimensionError("RGB image contains non-finite values")
        object.__setattr__(self, "data", array)

    @property
    def channels(self) -> int:
        return 3

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])


def project_rgb(hsi: SpectralImage, response: np.ndarray = RESPONSE_MATRIX) -> RgbImage:
    """Linear per-pixel projection ``rgb = response · spectrum`` (no gamma)."""
    response = np.asarray(response, dtype=np.float64)
    if response.shape != (3, hsi.bands):
        raise DimensionError(
            f"response matrix {response.shape} does not match {hsi.bands}-band image"
        )
    return RgbImage(np.einsum("cb,bhw->chw", response, hsi.data))


class Label(str, Enum):
    """Ground-truth class of a sample; fake is the positive class."""

    real = "real"
    fake = "fake"

    @property
    def index(self) -> int:
        return 1 if self is Label.fake else 0


class ManipulationKind(str, Enum):
    """Synthetic manipulation families; the order fixes the specific-head class ids."""

    band_notch = "BandNotch"
    high_freq_grid = "HighFreqGrid"
    band_shuffle_noise = "BandShuffleNoise"

    @property
    def class_id(self) -> int:
        return list(ManipulationKind).index(self)

    @classmethod
    def from_class_id(cls, class_id: int) -> ManipulationKind:
        return list(cls)[class_id]


@dataclass(frozen=True)
class LabeledSample:
    """One real or manipulated sample with its RGB projection."""

    hsi: SpectralImage
    rgb: RgbImage
    label: Label
    manip_id: int | None
    scene_seed: int

    def __post_init__(self) -> None:
        if (self.label is Label.fake) != (self.manip_id is not None):
            raise LabelError(
                f"manip_id must be present iff the sample is fake (label={self.label.value}, "
                f"manip_id={self.manip_id})"
            )
        if self.manip_id is not None and not 0 <= self.manip_id < len(ManipulationKind):
            raise LabelError(f"manip_id {self.manip_id} outside [0, {len(ManipulationKind)})")
        if (self.hsi.height, self.hsi.width) != (self.rgb.height, self.rgb.width):
            raise DimensionError("hsi and rgb extents differ")

    @classmethod
    def create(
        cls, hsi: SpectralImage, label: Label, manip_id: int | None, scene_seed: int
    ) -> LabeledSample:
        """Build a sample whose RGB is the projection of ``hsi``."""
        return cls(hsi=hsi, rgb=project_rgb(hsi), label=label, manip_id=manip_id, scene_seed=scene_seed)

    @property
    def kind(self) -> ManipulationKind | None:
        return None if self.manip_id is None else ManipulationKind.from_class_id(self.manip_id)
