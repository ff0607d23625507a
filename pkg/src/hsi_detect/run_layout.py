"""Filesystem layout of datasets and runs.

Datasets live at ``<data_root>/<data_hash>/`` and runs at
``<runs_root>/<config_hash>/{checkpoints,reports,logs}``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .config import config_hash
from .config import data_hash
from .config import dump_config
from .custom_exceptions import DataIOError
from .dataset_builder import MANIFEST_NAME

_SAFE_STEM = re.compile(r"[^A-Za-z0-9_.-]+")


def sanitize_stem(value: str) -> str:
    """File-name-safe version of ``value`` (kind names, command names)."""
    cleaned = _SAFE_STEM.sub("_", value).strip("._")
    return cleaned or "unnamed"


@dataclass(frozen=True)
class RunLayout:
    """Resolved paths of one run and its dataset."""

    run_dir: Path
    data_dir: Path
    config_hash: str
    data_hash: str

    @classmethod
    def for_config(cls, cfg: RunConfig) -> RunLayout:
        run_hash = config_hash(cfg)
        dataset_hash = data_hash(cfg)
        return cls(
            run_dir=Path(cfg.paths.runs_root) / run_hash,
            data_dir=Path(cfg.paths.data_root) / dataset_hash,
            config_hash=run_hash,
            data_hash=dataset_hash,
        )

    @property
    def checkpoints(self) -> Path:
        return self.run_dir / "checkpoints"

    @property
    def reports(self) -> Path:
        return self.run_dir / "reports"

    @property
    def logs(self) -> Path:
        return self.run_dir / "logs"

    @property
    def manifest(self) -> Path:
        return self.data_dir / MANIFEST_NAME

    @property
    def hsr_checkpoint(self) -> Path:
        return self.checkpoints / "hsr.hsck"

    def detector_checkpoint(self, tag: str | None = None) -> Path:
        name = "det.hsck" if tag is None else f"det_{sanitize_stem(tag)}.hsck"
        return self.checkpoints / name

    def loss_csv(self, tag: str) -> Path:
        return self.reports / f"{sanitize_stem(tag)}_loss.csv"

    def log_file(self, command: str) -> Path:
        return self.logs / f"{sanitize_stem(command)}.jsonl"

    def create(self, cfg: RunConfig) -> RunLayout:
        """Create the run directories and snapshot the resolved config."""
        try:
            for directory in (self.checkpoints, self.reports, self.logs):
                directory.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "config.json").write_text(dump_config(cfg), encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot create run directory {self.run_dir}: {exc}") from exc
        return self

    def require_dataset(self) -> Path:
        if not self.manifest.is_file():
            raise DataIOError(
                f"no dataset at {self.data_dir}; run 'hsi-detect gen-data' with this config first"
            )
        return self.manifest
