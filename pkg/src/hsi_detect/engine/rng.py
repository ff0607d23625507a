"""Deterministic, splittable random streams.

Every stochastic site asks for its own stream by ``(global_seed, site_label,
item_index)``. The triple is hashed into a 128-bit Philox key, so streams are
independent of call order and of how work is spread across threads.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest(global_seed: int, site_label: str, item_index: int, size: int) -> bytes:
    material = f"{int(global_seed)}:{site_label}:{int(item_index)}".encode()
    return hashlib.blake2b(material, digest_size=size).digest()


def derive_key(global_seed: int, site_label: str, item_index: int = 0) -> int:
    """128-bit Philox key for one stochastic site."""
    return int.from_bytes(_digest(global_seed, site_label, item_index, 16), "little")


def derive_seed(global_seed: int, site_label: str, item_index: int = 0) -> int:
    """63-bit integer seed, e.g. a scene seed recorded in manifests."""
    return int.from_bytes(_digest(global_seed, site_label, item_index, 8), "little") >> 1


def stream(global_seed: int, site_label: str, item_index: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(global_seed, site_label, item_index)``."""
    return np.random.Generator(np.random.Philox(key=derive_key(global_seed, site_label, item_index)))
