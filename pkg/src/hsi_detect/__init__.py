"""hsi-detect: spectral reconstruction and manipulation detection.

Reconstructs 31-band cubes from RGB, trains a disentangling detector on
synthetic paired scenes, and evaluates it across manipulation families.
"""

from .config import RunConfig
from .config import load_config
from .custom_exceptions import HsiDetectError
from .spectral_types import NUM_BANDS
from .spectral_types import Label
from .spectral_types import LabeledSample
from .spectral_types import ManipulationKind
from .spectral_types import RgbImage
from .spectral_types import SpectralImage
from .version_info import __version__

__all__ = [
    "__version__",
    "HsiDetectError",
    "RunConfig",
    "load_config",
    "NUM_BANDS",
    "SpectralImage",
    "RgbImage",
    "Label",
    "ManipulationKind",
    "LabeledSample",
]
