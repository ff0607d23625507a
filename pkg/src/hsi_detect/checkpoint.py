"""HSCK parameter checkpoints.

Layout (little-endian)::

    b"HSCK" | u32 version | u64 config hash | u32 entry count
    per entry, sorted by name:
        u32 name length | UTF-8 name | u8 dtype tag (1 = f32)
        u32 rank | u32 extent × rank | f32 payload

Sorting makes save → load → save byte-identical.
"""

from __future__ import annotations

import logging
import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .custom_exceptions import DataIOError
from .custom_exceptions import FormatError
from .engine.params import ParameterStore
from .engine.tensor import Tensor

logger = logging.getLogger(__name__)

MAGIC = b"HSCK"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sIQI")
_U32 = struct.Struct("<I")
_U8 = struct.Struct("<B")


@dataclass(frozen=True)
class Checkpoint:
    config_hash: str
    arrays: dict[str, np.ndarray]

    def names(self, prefix: str = "") -> list[str]:
        return [name for name in self.arrays if name.startswith(prefix)]

    def to_store(self, prefix: str = "") -> ParameterStore:
        """Parameters whose names start with ``prefix``, as float64 tensors."""
        store = ParameterStore()
        for name in self.names(prefix):
            store.add(name, self.arrays[name].astype(np.float64))
        return store

    def restore_into(self, store: ParameterStore) -> ParameterStore:
        """Copy values into an existing store; every name must be present with its shape."""
        for name, tensor in store.items():
            if name not in self.arrays:
                raise FormatError(f"checkpoint lacks parameter '{name}'")
            value = self.arrays[name]
            if value.shape != tensor.shape:
                raise FormatError(
                    f"checkpoint parameter '{name}' has shape {value.shape}, expected {tensor.shape}"
                )
            store.assign(name, value.astype(np.float64))
        return store


def encode_checkpoint(params: Mapping[str, Tensor | np.ndarray], config_hash: str) -> bytes:
    chunks = [_HEADER.pack(MAGIC, VERSION, int(config_hash, 16), len(params))]
    for name in sorted(params):
        value = params[name]
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)) + encoded + _U8.pack(DTYPE_F32))
        chunks.append(struct.pack(f"<I{array.ndim}I", array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.raw):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.offset)
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(raw: bytes) -> Checkpoint:
    reader = _Reader(raw)
    if raw[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}", offset=0)
    magic, version, digest, count = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)

    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = reader.offset
        length = reader.u32("name length")
        try:
            name = reader.take(length, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("checkpoint entry name is not UTF-8", offset=start + 4) from exc
        tag_offset = reader.offset
        (tag,) = _U8.unpack(reader.take(1, "dtype tag"))
        if tag != DTYPE_F32:
            raise FormatError(f"unknown dtype tag {tag} for '{name}'", offset=tag_offset)
        rank = reader.u32("rank")
        shape = tuple(reader.u32("extent") for _ in range(rank))
        size = math.prod(shape)
        payload = reader.take(4 * size, f"payload of '{name}'")
        if name in arrays:
            raise FormatError(f"duplicate checkpoint entry '{name}'", offset=start)
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if reader.offset != len(raw):
        raise FormatError("trailing bytes after checkpoint entries", offset=reader.offset)
    return Checkpoint(config_hash=f"{digest:016x}", arrays=arrays)


def save_checkpoint(path: Path, params: Mapping[str, Tensor | np.ndarray], config_hash: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(params, config_hash))
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc
    logger.info("checkpoint saved", extra={"path": str(path), "entries": len(params)})
    return path


def load_checkpoint(path: Path, config_hash: str | None = None) -> Checkpoint:
    """Read a checkpoint; a differing config hash is only a warning."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    checkpoint = decode_checkpoint(raw)
    if config_hash is not None and checkpoint.config_hash != config_hash:
        logger.warning(
            "checkpoint was written under a different config",
            extra={"path": str(path), "checkpoint_hash": checkpoint.config_hash, "config_hash": config_hash},
        )
    return checkpoint
