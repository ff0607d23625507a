"""Paired real/fake datasets with scene-disjoint partitions.

Every scene yields one real sample and one manipulated copy sharing its
``scene_seed``. Scenes are assigned to train/val/test by a seeded
permutation that depends only on ``(seed, n_scenes)``, so datasets built
with the same seed but different manipulation kinds share their partitions.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Iterator
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

from .custom_exceptions import ConfigError
from .custom_exceptions import DataIOError
from .custom_exceptions import FormatError
from .engine.rng import derive_seed
from .engine.rng import stream
from .hs1_format import load_hs1
from .hs1_format import save_hs1
from .manipulations import ManipulationParams
from .manipulations import apply_manipulation
from .manipulations import parse_kind
from .spectral_types import Label
from .spectral_types import LabeledSample
from .spectral_types import ManipulationKind
from .synthetic_data import MAX_MATERIALS
from .synthetic_data import MIN_MATERIALS
from .synthetic_data import synth_scene

logger = logging.getLogger(__name__)

PARTITIONS = ("train", "val", "test")
MANIFEST_NAME = "manifest.jsonl"
MIN_SCENES = 10


@dataclass(frozen=True)
class SamplePair:
    """Real sample and its manipulated twin from one scene."""

    real: LabeledSample
    fake: LabeledSample
    scene_index: int

    @property
    def scene_seed(self) -> int:
        return self.real.scene_seed

    def samples(self) -> tuple[LabeledSample, LabeledSample]:
        return self.real, self.fake


@dataclass(frozen=True)
class DatasetSplits:
    """Train/val/test lists of sample pairs."""

    train: list[SamplePair] = field(default_factory=list)
    val: list[SamplePair] = field(default_factory=list)
    test: list[SamplePair] = field(default_factory=list)

    def partition(self, name: str) -> list[SamplePair]:
        if name not in PARTITIONS:
            raise ConfigError(f"unknown partition '{name}'")
        return getattr(self, name)

    def samples(self, name: str) -> Iterator[LabeledSample]:
        for pair in self.partition(name):
            yield from pair.samples()

    def scene_seeds(self, name: str) -> set[int]:
        return {pair.scene_seed for pair in self.partition(name)}

    def counts(self) -> dict[str, dict[str, int]]:
        """Sample counts per partition and label."""
        return {
            name: {"real": len(self.partition(name)), "fake": len(self.partition(name))}
            for name in PARTITIONS
        }


def worker_count() -> int:
    """Data-generation workers, capped by ``HSI_DETECT_THREADS``."""
    raw = os.getenv("HSI_DETECT_THREADS")
    if raw is None:
        return max(1, min(8, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"HSI_DETECT_THREADS must be an integer, got '{raw}'") from exc
    return max(1, value)


def split_counts(n_scenes: int, split_fracs: Sequence[float]) -> tuple[int, int, int]:
    if len(split_fracs) != 3:
        raise ConfigError(f"expected three split fractions, got {len(split_fracs)}")
    if any(f < 0 for f in split_fracs) or abs(sum(split_fracs) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be non-negative and sum to 1, got {list(split_fracs)}")
    n_train = int(split_fracs[0] * n_scenes)
    n_val = int(split_fracs[1] * n_scenes)
    return n_train, n_val, n_scenes - n_train - n_val


def scene_partitions(n_scenes: int, split_fracs: Sequence[float], seed: int) -> dict[str, list[int]]:
    """Scene indices per partition; depends only on ``(n_scenes, split_fracs, seed)``."""
    n_train, n_val, _ = split_counts(n_scenes, split_fracs)
    order = stream(seed, "partition").permutation(n_scenes)
    return {
        "train": sorted(order[:n_train].tolist()),
        "val": sorted(order[n_train : n_train + n_val].tolist()),
        "test": sorted(order[n_train + n_val :].tolist()),
    }


def _scene_pair(
    index: int,
    seed: int,
    size: int,
    kinds: Sequence[ManipulationKind],
    materials: tuple[int, int],
    params: ManipulationParams | None,
) -> SamplePair:
    scene_seed = derive_seed(seed, "scene", index)
    n_materials = int(stream(seed, "materials", index).integers(materials[0], materials[1] + 1))
    kind = kinds[index % len(kinds)]
    hsi = synth_scene(scene_seed, size, n_materials)
    fake = apply_manipulation(hsi, kind, derive_seed(seed, "manipulation", index), params)
    return SamplePair(
        real=LabeledSample.create(hsi, Label.real, None, scene_seed),
        fake=LabeledSample.create(fake, Label.fake, kind.class_id, scene_seed),
        scene_index=index,
    )


def make_dataset(
    n_scenes: int,
    kinds: Sequence[ManipulationKind | str],
    split_fracs: Sequence[float],
    seed: int,
    *,
    size: int = 64,
    materials: tuple[int, int] = (3, 5),
    params: ManipulationParams | None = None,
    partitions: Sequence[str] = PARTITIONS,
    workers: int | None = None,
) -> DatasetSplits:
    """Generate paired samples and split them by scene.

    Fake kinds cycle through ``kinds`` by scene index. ``partitions`` limits
    generation to the named partitions; the others come back empty.
    """
    if n_scenes < MIN_SCENES:
        raise ConfigError(f"n_scenes must be at least {MIN_SCENES}, got {n_scenes}")
    if not kinds:
        raise ConfigError("at least one manipulation kind is required")
    resolved = [parse_kind(k) for k in kinds]
    low, high = materials
    if not MIN_MATERIALS <= low <= high <= MAX_MATERIALS:
        raise ConfigError(f"material range {materials} outside [{MIN_MATERIALS}, {MAX_MATERIALS}]")
    assignment = scene_partitions(n_scenes, split_fracs, seed)

    wanted = [i for name in PARTITIONS if name in partitions for i in assignment[name]]
    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        pairs = list(
            pool.map(lambda i: _scene_pair(i, seed, size, resolved, materials, params), wanted)
        )
    by_index = {pair.scene_index: pair for pair in pairs}
    splits = DatasetSplits(
        **{
            name: [by_index[i] for i in assignment[name]] if name in partitions else []
            for name in PARTITIONS
        }
    )
    logger.info(
        "dataset generated",
        extra={
            "n_scenes": n_scenes,
            "kinds": [k.value for k in resolved],
            "partition_sizes": {name: len(splits.partition(name)) for name in PARTITIONS},
        },
    )
    return splits


def _sample_record(sample: LabeledSample, path: str, partition: str) -> dict:
    return {
        "path": path,
        "label": sample.label.value,
        "manip_id": sample.manip_id,
        "scene_seed": sample.scene_seed,
        "partition": partition,
    }


def write_dataset(splits: DatasetSplits, out_dir: Path) -> Path:
    """Write HS1 files plus ``manifest.jsonl`` and return the manifest path."""
    out_dir = Path(out_dir)
    lines = []
    for name in PARTITIONS:
        for pair in splits.partition(name):
            for sample in pair.samples():
                relative = f"{name}/{pair.scene_index:05d}_{sample.label.value}.hs1"
                save_hs1(out_dir / relative, sample.hsi)
                lines.append(json.dumps(_sample_record(sample, relative, name)))
    manifest = out_dir / MANIFEST_NAME
    try:
        manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write manifest {manifest}: {exc}") from exc
    logger.info("dataset written", extra={"manifest": str(manifest), "samples": len(lines)})
    return manifest


def _parse_manifest_line(line: str, number: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest line {number} is not valid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise FormatError(f"manifest line {number} is not a JSON object")
    missing = {"path", "label", "manip_id", "scene_seed", "partition"} - set(record)
    if missing:
        raise FormatError(f"manifest line {number} lacks fields {sorted(missing)}")
    if record["partition"] not in PARTITIONS:
        raise FormatError(f"manifest line {number} has unknown partition '{record['partition']}'")
    if not isinstance(record["scene_seed"], int) or isinstance(record["scene_seed"], bool):
        raise FormatError(f"manifest line {number} has a non-integer scene_seed")
    manip_id = record["manip_id"]
    if manip_id is not None and (not isinstance(manip_id, int) or isinstance(manip_id, bool)):
        raise FormatError(f"manifest line {number} has a non-integer manip_id")
    return record


def _sample_path(root: Path, relative: object, number: int) -> Path:
    """Resolve a manifest path; it must stay inside the dataset directory."""
    if not isinstance(relative, str) or not relative:
        raise FormatError(f"manifest line {number} has an invalid path")
    path = (root / relative).resolve()
    if not path.is_relative_to(root.resolve()):
        raise FormatError(f"manifest line {number} points outside the dataset: {relative}")
    return path


def load_dataset(manifest_path: Path) -> DatasetSplits:
    """Rebuild pairs from a manifest written by ``write_dataset``."""
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {manifest_path}: {exc}") from exc

    root = manifest_path.parent
    pending: dict[tuple[str, int], dict[str, LabeledSample]] = {}
    order: dict[str, list[int]] = {name: [] for name in PARTITIONS}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        record = _parse_manifest_line(line, number)
        try:
            label = Label(record["label"])
        except ValueError as exc:
            raise FormatError(f"manifest line {number} has unknown label '{record['label']}'") from exc
        cube = load_hs1(_sample_path(root, record["path"], number))
        sample = LabeledSample.create(cube, label, record["manip_id"], record["scene_seed"])
        key = (record["partition"], sample.scene_seed)
        if key not in pending:
            pending[key] = {}
            order[record["partition"]].append(sample.scene_seed)
        pending[key][label.value] = sample

    result: dict[str, list[SamplePair]] = {name: [] for name in PARTITIONS}
    for name in PARTITIONS:
        for index, scene_seed in enumerate(order[name]):
            entry = pending[(name, scene_seed)]
            if set(entry) != {"real", "fake"}:
                raise FormatError(f"scene {scene_seed} in '{name}' is not a real/fake pair")
            result[name].append(SamplePair(entry["real"], entry["fake"], index))
    return DatasetSplits(**result)
