"""HS1 spectral-image files and PGM band dumps.

HS1 layout (little-endian)::

    offset 0   magic  b"HS1\\0"
    offset 4   u32    version (1)
    offset 8   u32    height
    offset 12  u32    width
    offset 16  u32    channels
    offset 20  f32    channels × height × width values, band-major, row-major

Values are clamped to [0, 1] when written.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from .custom_exceptions import DataIOError
from .custom_exceptions import FormatError
from .spectral_types import BAND_WAVELENGTHS
from .spectral_types import NUM_BANDS
from .spectral_types import RgbImage
from .spectral_types import SpectralImage

logger = logging.getLogger(__name__)

HS1_MAGIC = b"HS1\x00"
HS1_VERSION = 1
HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = HEADER.size  # 20
READABLE_CHANNELS = (3, NUM_BANDS)


def encode_hs1(data: np.ndarray) -> bytes:
    """Serialize a ``C×H×W`` array to HS1 bytes."""
    channels, height, width = data.shape
    payload = np.clip(data, 0.0, 1.0).astype("<f4", order="C").tobytes()
    return HEADER.pack(HS1_MAGIC, HS1_VERSION, height, width, channels) + payload


def decode_hs1(raw: bytes, allowed_channels: tuple[int, ...] = READABLE_CHANNELS) -> np.ndarray:
    """Parse HS1 bytes into a float64 ``C×H×W`` array.

    Raises:
        FormatError: On bad magic, unsupported version, implausible extents or
            a payload whose length disagrees with the header.
    """
    if len(raw) < 4 or raw[:4] != HS1_MAGIC:
        raise FormatError(f"bad HS1 magic {raw[:4]!r}", offset=0)
    if len(raw) < HEADER_SIZE:
        raise FormatError("truncated HS1 header", offset=len(raw))
    _, version, height, width, channels = HEADER.unpack_from(raw)
    if version != HS1_VERSION:
        raise FormatError(f"unsupported HS1 version {version}", offset=4)
    if height == 0 or width == 0:
        raise FormatError(f"empty HS1 extent {height}×{width}", offset=8)
    if channels not in allowed_channels:
        raise FormatError(
            f"HS1 channel count {channels} not in {allowed_channels}", offset=16
        )

    expected = HEADER_SIZE + 4 * channels * height * width
    if len(raw) < expected:
        raise FormatError(
            f"truncated HS1 payload: expected {expected} bytes, file has {len(raw)}",
            offset=len(raw),
        )
    if len(raw) > expected:
        raise FormatError(f"trailing bytes after HS1 payload ({len(raw) - expected})", offset=expected)
    values = np.frombuffer(raw, dtype="<f4", count=channels * height * width, offset=HEADER_SIZE)
    array = values.astype(np.float64).reshape(channels, height, width)
    if not np.all(np.isfinite(array)):
        raise FormatError("HS1 payload holds non-finite values", offset=HEADER_SIZE)
    return array


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path: Path, raw: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(raw)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def save_hs1(path: Path, img: SpectralImage | RgbImage) -> Path:
    """Write ``img`` as an HS1 file and return the path."""
    _write_bytes(path, encode_hs1(img.data))
    logger.debug("wrote HS1 file", extra={"path": str(path), "shape": list(img.data.shape)})
    return Path(path)


def read_hs1_array(path: Path) -> np.ndarray:
    """Read an HS1 file holding either 3 or 31 channels."""
    return decode_hs1(_read_bytes(path))


def load_hs1(path: Path) -> SpectralImage:
    """Read a 31-band HS1 file."""
    return SpectralImage(decode_hs1(_read_bytes(path), allowed_channels=(NUM_BANDS,)))


def encode_pgm(plane: np.ndarray) -> bytes:
    """Binary 8-bit PGM (P5) of a 2-D array with values in [0, 1]."""
    height, width = plane.shape
    pixels = np.round(np.clip(plane, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def write_band_pgms(img: SpectralImage, out_dir: Path) -> list[Path]:
    """Write one ``band_<nm>.pgm`` per band into ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    for band, wavelength in enumerate(BAND_WAVELENGTHS):
        path = out_dir / f"band_{int(wavelength)}.pgm"
        _write_bytes(path, encode_pgm(img.data[band]))
        written.append(path)
    logger.info("dumped band images", extra={"out_dir": str(out_dir), "count": len(written)})
    return written
