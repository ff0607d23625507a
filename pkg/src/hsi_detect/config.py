"""Run configuration for hsi-detect.

A run is described by one JSON document parsed into ``RunConfig``. Every
section rejects unknown keys; the canonical serialisation of everything but
``paths`` is hashed to name the run directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import ValidationInfo
from pydantic import field_validator

from .custom_exceptions import ConfigError
from .detector_network import DetectorConfig
from .detector_training import DetectorTrainConfig
from .hsr_network import HsrConfig
from .hsr_training import HsrTrainConfig
from .manipulations import ManipulationParams
from .spectral_types import ManipulationKind
from .synthetic_data import MAX_MATERIALS
from .synthetic_data import MIN_MATERIALS

logger = logging.getLogger(__name__)

_STRICT = ConfigDict(extra="forbid", frozen=True)


def _check_kinds(kinds: list[str]) -> list[str]:
    if not kinds:
        raise ValueError("at least one manipulation kind is required")
    valid = {k.value for k in ManipulationKind}
    unknown = [k for k in kinds if k not in valid]
    if unknown:
        raise ValueError(f"unknown manipulation kinds {unknown}; expected {sorted(valid)}")
    if len(set(kinds)) != len(kinds):
        raise ValueError(f"manipulation kinds repeat: {kinds}")
    return kinds


class DataConfig(BaseModel):
    """Synthetic dataset: scene count and size, fake kinds, split fractions.

    Attributes
    ----------
    n_scenes: int
        Number of scenes; each yields one real and one fake sample.
    size: int
        Square scene extent in pixels, a multiple of 4.
    kinds: list[str]
        Manipulation kinds cycled over the scenes.
    splits: tuple[float, float, float]
        Train/val/test fractions of the scenes, summing to 1.
    """

    model_config = _STRICT

    n_scenes: int = Field(default=400, ge=10)
    size: int = Field(default=64, ge=4, le=1024)
    kinds: list[str] = Field(default_factory=lambda: [ManipulationKind.band_notch.value])
    splits: tuple[float, float, float] = (0.6, 0.2, 0.2)
    materials_min: int = Field(default=3, ge=MIN_MATERIALS, le=MAX_MATERIALS)
    materials_max: int = Field(default=5, ge=MIN_MATERIALS, le=MAX_MATERIALS)
    manipulation: ManipulationParams = Field(default_factory=ManipulationParams)

    @field_validator("size")
    @classmethod
    def validate_size(cls, v: int) -> int:
        if v % 4 != 0:
            raise ValueError(f"size must be a multiple of 4, got {v}")
        return v

    @field_validator("kinds")
    @classmethod
    def validate_kinds(cls, v: list[str]) -> list[str]:
        return _check_kinds(v)

    @field_validator("splits")
    @classmethod
    def validate_splits(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(f < 0 for f in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {list(v)}")
        return v

    @field_validator("materials_max")
    @classmethod
    def validate_material_range(cls, v: int, info: ValidationInfo) -> int:
        low = info.data.get("materials_min", MIN_MATERIALS)
        if v < low:
            raise ValueError(f"materials_max ({v}) is below materials_min ({low})")
        return v

    @property
    def materials(self) -> tuple[int, int]:
        return self.materials_min, self.materials_max


class HsrSection(BaseModel):
    model_config = _STRICT

    network: HsrConfig = Field(default_factory=HsrConfig)
    training: HsrTrainConfig = Field(default_factory=HsrTrainConfig)


class DetectorSection(BaseModel):
    model_config = _STRICT

    network: DetectorConfig = Field(default_factory=DetectorConfig)
    training: DetectorTrainConfig = Field(default_factory=DetectorTrainConfig)


class EvalConfig(BaseModel):
    """Cross-manipulation protocol settings."""

    model_config = _STRICT

    protocol_kinds: list[str] = Field(default_factory=lambda: [k.value for k in ManipulationKind])
    batch_size: int = Field(default=32, ge=1)
    ablation_seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])

    @field_validator("protocol_kinds")
    @classmethod
    def validate_protocol_kinds(cls, v: list[str]) -> list[str]:
        return _check_kinds(v)

    @field_validator("ablation_seeds")
    @classmethod
    def validate_ablation_seeds(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one ablation seed is required")
        return v


class PathsConfig(BaseModel):
    """Filesystem roots; excluded from the config hash."""

    model_config = _STRICT

    data_root: Path = Path("data")
    runs_root: Path = Path("runs")


class RunConfig(BaseModel):
    """Complete, validated description of one run."""

    model_config = _STRICT

    seed: int = Field(default=0, ge=0, lt=2**64)
    data: DataConfig = Field(default_factory=DataConfig)
    hsr: HsrSection = Field(default_factory=HsrSection)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)


def _digest(payload: Any) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode("utf-8"), digest_size=8).hexdigest()


def config_hash(cfg: RunConfig) -> str:
    """16 hex digits over every section except ``paths``, defaults included."""
    return _digest(cfg.model_dump(mode="json", exclude={"paths"}))


def data_hash(cfg: RunConfig) -> str:
    """Digest of the seed and data section; names the on-disk dataset."""
    return _digest({"seed": cfg.seed, "data": cfg.data.model_dump(mode="json")})


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def parse_config(document: dict[str, Any], seed_override: int | None = None) -> RunConfig:
    """Validate a config mapping, applying ``--seed`` first."""
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    if seed_override is not None:
        document = {**document, "seed": seed_override}
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"Configuration validation failed: {exc}") from exc


def load_config(path: Path | None = None, seed_override: int | None = None) -> RunConfig:
    """Load a JSON run config (defaults when ``path`` is None).

    Raises
    ------
    ConfigError
        If the file cannot be read, is not JSON, or fails validation.
    """
    load_dotenv(override=False)

    document: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc

    cfg = parse_config(document, seed_override)
    logger.info(
        "configuration loaded",
        extra={"config_hash": config_hash(cfg), "data_hash": data_hash(cfg), "seed": cfg.seed},
    )
    return cfg
