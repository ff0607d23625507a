"""Run orchestration behind the CLI commands.

Every function takes the validated ``RunConfig`` and its ``RunLayout`` and
writes its artifacts under the run directory. Nothing here prints; the CLI
renders the returned objects.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

from .checkpoint import load_checkpoint
from .checkpoint import save_checkpoint
from .config import RunConfig
from .custom_exceptions import ConfigError
from .custom_exceptions import DataIOError
from .dataset_builder import DatasetSplits
from .dataset_builder import load_dataset
from .dataset_builder import make_dataset
from .dataset_builder import write_dataset
from .detector_network import DetectorConfig
from .detector_network import init_detector_params
from .detector_training import DetectorTrainResult
from .detector_training import FrozenHsr
from .detector_training import PairArrays
from .detector_training import pair_arrays
from .detector_training import train_detector
from .engine.params import ParameterStore
from .evaluation import ReportTable
from .evaluation import TrainedDetector
from .evaluation import auc
from .evaluation import cross_manipulation_eval
from .evaluation import score_pairs
from .hs1_format import read_hs1_array
from .hs1_format import save_hs1
from .hs1_format import write_band_pgms
from .hsr_network import hsr_reconstruct
from .hsr_network import init_hsr_params
from .hsr_training import HsrTrainResult
from .hsr_training import hsr_pretrain
from .logging_config import log_operation_start
from .logging_config import log_operation_success
from .logging_config import stage
from .manipulations import parse_kind
from .run_layout import RunLayout
from .spectral_types import ManipulationKind
from .spectral_types import RgbImage
from .spectral_types import SpectralImage
from .spectral_types import project_rgb

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def build_splits(
    cfg: RunConfig, kinds: Sequence[str] | None = None, partitions: Sequence[str] | None = None
) -> DatasetSplits:
    """Generate the configured dataset in memory, optionally for other kinds."""
    data = cfg.data
    extra = {} if partitions is None else {"partitions": tuple(partitions)}
    return make_dataset(
        data.n_scenes,
        list(kinds if kinds is not None else data.kinds),
        data.splits,
        cfg.seed,
        size=data.size,
        materials=data.materials,
        params=data.manipulation,
        **extra,
    )


def generate_data(cfg: RunConfig, layout: RunLayout) -> DatasetSplits:
    with stage("gen-data"):
        log_operation_start("gen-data", n_scenes=cfg.data.n_scenes, kinds=list(cfg.data.kinds))
        splits = build_splits(cfg)
        manifest = write_dataset(splits, layout.data_dir)
        log_operation_success("gen-data", manifest=str(manifest))
    return splits


def load_splits(layout: RunLayout) -> DatasetSplits:
    return load_dataset(layout.require_dataset())


# ---------------------------------------------------------------------------
# reconstruction network
# ---------------------------------------------------------------------------


def _real_pairs(splits: DatasetSplits, partition: str) -> list[tuple[RgbImage, SpectralImage]]:
    return [(pair.real.rgb, pair.real.hsi) for pair in splits.partition(partition)]


def pretrain_hsr(cfg: RunConfig, layout: RunLayout, splits: DatasetSplits | None = None) -> HsrTrainResult:
    """Train on real training scenes, validate on real validation scenes."""
    splits = splits if splits is not None else load_splits(layout)
    with stage("pretrain-hsr"):
        log_operation_start("pretrain-hsr", steps=cfg.hsr.training.steps, train_scenes=len(splits.train))
        result = hsr_pretrain(
            _real_pairs(splits, "train"),
            cfg.hsr.network,
            cfg.hsr.training,
            cfg.seed,
            val_pairs=_real_pairs(splits, "val"),
        )
        save_checkpoint(layout.hsr_checkpoint, result.params, layout.config_hash)
        result.history.write_csv(layout.loss_csv("hsr"))
        log_operation_success(
            "pretrain-hsr", checkpoint=str(layout.hsr_checkpoint), seconds=round(result.history.duration, 3)
        )
    return result


def load_hsr(cfg: RunConfig, layout: RunLayout, checkpoint: Path | None = None) -> ParameterStore:
    path = Path(checkpoint) if checkpoint is not None else layout.hsr_checkpoint
    if not path.is_file():
        raise ConfigError(
            f"no reconstruction checkpoint at {path}; run 'hsi-detect pretrain-hsr' first"
        )
    store = init_hsr_params(cfg.hsr.network, cfg.seed)
    return load_checkpoint(path, layout.config_hash).restore_into(store)


def frozen_hsr(
    cfg: RunConfig, layout: RunLayout, det_cfg: DetectorConfig | None = None, *, train_missing: bool = False
) -> FrozenHsr | None:
    """The reconstruction network a detector needs, or None for RGB/measured input."""
    det_cfg = det_cfg if det_cfg is not None else cfg.detector.network
    if det_cfg.input != "hsi" or det_cfg.hsi_source != "reconstructed":
        return None
    if train_missing and not layout.hsr_checkpoint.is_file():
        logger.info("no reconstruction checkpoint yet; pretraining first")
        pretrain_hsr(cfg, layout)
    return FrozenHsr(params=load_hsr(cfg, layout), cfg=cfg.hsr.network)


def reconstruct_file(
    cfg: RunConfig,
    layout: RunLayout,
    input_path: Path,
    *,
    checkpoint: Path | None = None,
    output: Path | None = None,
    dump_bands: bool = False,
) -> tuple[Path, list[Path]]:
    """Reconstruct a 3- or 31-channel HS1 file; 31-channel input is projected first."""
    input_path = Path(input_path)
    array = read_hs1_array(input_path)
    rgb = RgbImage(array) if array.shape[0] == 3 else project_rgb(SpectralImage(array))
    params = load_hsr(cfg, layout, checkpoint)
    with stage("reconstruct"):
        cube = hsr_reconstruct(rgb, params, cfg.hsr.network)
    out_dir = layout.run_dir / "reconstructed"
    output = Path(output) if output is not None else out_dir / f"{input_path.stem}_hsr.hs1"
    save_hs1(output, cube)
    bands = write_band_pgms(cube, output.parent / f"{output.stem}_bands") if dump_bands else []
    logger.info(
        "reconstruction written",
        extra={"input": str(input_path), "output": str(output), "bands": len(bands)},
    )
    return output, bands


# ---------------------------------------------------------------------------
# detector
# ---------------------------------------------------------------------------


@dataclass
class DetectorRun:
    model: TrainedDetector
    result: DetectorTrainResult
    checkpoint: Path


def train_detector_run(
    cfg: RunConfig,
    layout: RunLayout,
    splits: DatasetSplits,
    *,
    kinds: Sequence[str] | None = None,
    det_cfg: DetectorConfig | None = None,
    seed: int | None = None,
    tag: str | None = None,
    hsr: FrozenHsr | None = None,
) -> DetectorRun:
    """Train one detector on the training partition and save it."""
    det_cfg = det_cfg if det_cfg is not None else cfg.detector.network
    seed = cfg.seed if seed is None else seed
    train_kinds = tuple(parse_kind(k) for k in (kinds if kinds is not None else cfg.data.kinds))
    train = splits.partition("train")
    with stage("train-detector"):
        log_operation_start("train-detector", tag=tag, seed=seed, kinds=[k.value for k in train_kinds])
        result = train_detector(pair_arrays(train, det_cfg, hsr), det_cfg, cfg.detector.training, seed)
        checkpoint = save_checkpoint(layout.detector_checkpoint(tag), result.params, layout.config_hash)
        result.history.write_csv(layout.loss_csv("detector" if tag is None else f"detector_{tag}"))
        log_operation_success(
            "train-detector", tag=tag, checkpoint=str(checkpoint), seconds=round(result.history.duration, 3)
        )
    model = TrainedDetector(
        params=result.params,
        cfg=det_cfg,
        train_kinds=train_kinds,
        train_scene_seeds=frozenset(splits.scene_seeds("train")),
    )
    return DetectorRun(model=model, result=result, checkpoint=checkpoint)


def load_detector(
    cfg: RunConfig, layout: RunLayout, splits: DatasetSplits, checkpoint: Path | None = None
) -> TrainedDetector:
    path = Path(checkpoint) if checkpoint is not None else layout.detector_checkpoint()
    if not path.is_file():
        raise DataIOError(f"no detector checkpoint at {path}; run 'hsi-detect train-detector' first")
    store = init_detector_params(cfg.detector.network, cfg.seed)
    load_checkpoint(path, layout.config_hash).restore_into(store)
    return TrainedDetector(
        params=store,
        cfg=cfg.detector.network,
        train_kinds=tuple(parse_kind(k) for k in cfg.data.kinds),
        train_scene_seeds=frozenset(splits.scene_seeds("train")),
    )


def protocol_test_sets(
    cfg: RunConfig, det_cfg: DetectorConfig, hsr: FrozenHsr | None, kinds: Sequence[str]
) -> dict[ManipulationKind, PairArrays]:
    """Test partition of every kind, regenerated with the run seed.

    Partitions depend only on the seed and split fractions, so these scenes
    are the run's test scenes, disjoint from its training scenes.
    """
    test_sets = {}
    for kind in kinds:
        splits = build_splits(cfg, kinds=[kind], partitions=("test",))
        test_sets[parse_kind(kind)] = pair_arrays(splits.partition("test"), det_cfg, hsr)
    return test_sets


def evaluate_run(
    cfg: RunConfig, layout: RunLayout, checkpoint: Path | None = None, stem: str = "report"
) -> ReportTable:
    splits = load_splits(layout)
    model = load_detector(cfg, layout, splits, checkpoint)
    hsr = frozen_hsr(cfg, layout)
    with stage("eval"):
        log_operation_start("eval", checkpoint=str(checkpoint or layout.detector_checkpoint()))
        table = cross_manipulation_eval(
            model,
            protocol_test_sets(cfg, model.cfg, hsr, cfg.eval.protocol_kinds),
            cfg.eval.batch_size,
        )
        table.write(layout.reports, stem)
        log_operation_success("eval", report=stem, rows=len(table.train_kinds()))
    return table


def run_protocol(cfg: RunConfig, layout: RunLayout) -> ReportTable:
    """One detector per protocol kind, each evaluated on every kind."""
    hsr = frozen_hsr(cfg, layout, train_missing=True)
    det_cfg = cfg.detector.network
    test_sets = protocol_test_sets(cfg, det_cfg, hsr, cfg.eval.protocol_kinds)
    table = ReportTable()
    for kind in cfg.eval.protocol_kinds:
        splits = build_splits(cfg, kinds=[kind], partitions=("train",))
        run = train_detector_run(cfg, layout, splits, kinds=[kind], tag=kind, hsr=hsr)
        with stage("eval"):
            table.merge(cross_manipulation_eval(run.model, test_sets, cfg.eval.batch_size))
    table.write(layout.reports, "protocol")
    return table


# ---------------------------------------------------------------------------
# input ablation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    seed: int
    auc_hsi: float
    auc_rgb: float

    @property
    def gap(self) -> float:
        return self.auc_hsi - self.auc_rgb


@dataclass
class AblationReport:
    """Test AUC of hyperspectral- and RGB-input detectors trained alike."""

    kind: ManipulationKind
    hsi_source: str
    rows: list[AblationRow] = field(default_factory=list)

    @property
    def mean_gap(self) -> float:
        return float(np.mean([row.gap for row in self.rows])) if self.rows else 0.0

    @property
    def all_positive(self) -> bool:
        return bool(self.rows) and all(row.gap > 0 for row in self.rows)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("seed", "auc_hsi", "auc_rgb", "gap"))
        for row in self.rows:
            writer.writerow((row.seed, repr(row.auc_hsi), repr(row.auc_rgb), repr(row.gap)))
        return buffer.getvalue()

    def to_summary(self) -> dict:
        return {
            "kind": self.kind.value,
            "hsi_source": self.hsi_source,
            "rows": [
                {"seed": r.seed, "auc_hsi": r.auc_hsi, "auc_rgb": r.auc_rgb, "gap": r.gap}
                for r in self.rows
            ],
            "mean_gap": self.mean_gap,
            "all_positive": self.all_positive,
        }

    def write(self, reports_dir: Path) -> tuple[Path, Path]:
        csv_path = Path(reports_dir) / "ablation.csv"
        json_path = Path(reports_dir) / "ablation.json"
        try:
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            csv_path.write_text(self.to_csv(), encoding="utf-8")
            json_path.write_text(json.dumps(self.to_summary(), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot write ablation report to {reports_dir}: {exc}") from exc
        return csv_path, json_path

    def display(self, out: Console) -> None:
        table = Table(
            title=f"[bold cyan]Input ablation on {self.kind.value} (hsi_source={self.hsi_source})[/bold cyan]",
            header_style="bold blue",
        )
        table.add_column("Seed", justify="right")
        table.add_column("AUC hsi", justify="right")
        table.add_column("AUC rgb", justify="right")
        table.add_column("Gap", justify="right", style="bold")
        for row in self.rows:
            colour = "green" if row.gap > 0 else "red"
            table.add_row(
                str(row.seed), f"{row.auc_hsi:.4f}", f"{row.auc_rgb:.4f}", f"[{colour}]{row.gap:+.4f}[/{colour}]"
            )
        out.print(table)
        out.print(f"Mean gap: [bold]{self.mean_gap:+.4f}[/bold]")


def _test_auc(model: TrainedDetector, data: PairArrays, batch_size: int) -> float:
    scores, labels = score_pairs(model, data, batch_size)
    return auc(scores, labels)


def run_ablation(cfg: RunConfig, layout: RunLayout) -> AblationReport:
    """Same data, budget and seeds for both inputs; only the detector input differs."""
    kind = parse_kind(cfg.data.kinds[0])
    splits = load_splits(layout)
    base = cfg.detector.network
    configs = {name: base.model_copy(update={"input": name}) for name in ("hsi", "rgb")}
    hsr = frozen_hsr(cfg, layout, configs["hsi"], train_missing=True)
    test_pairs = build_splits(cfg, kinds=[kind.value], partitions=("test",)).partition("test")
    test_data = {
        name: pair_arrays(test_pairs, det_cfg, hsr if name == "hsi" else None)
        for name, det_cfg in configs.items()
    }

    report = AblationReport(kind=kind, hsi_source=base.hsi_source)
    for seed in cfg.eval.ablation_seeds:
        aucs = {}
        for name, det_cfg in configs.items():
            run = train_detector_run(
                cfg,
                layout,
                splits,
                kinds=[kind.value],
                det_cfg=det_cfg,
                seed=seed,
                tag=f"{name}_seed{seed}",
                hsr=hsr if name == "hsi" else None,
            )
            aucs[name] = _test_auc(run.model, test_data[name], cfg.eval.batch_size)
        report.rows.append(AblationRow(seed=seed, auc_hsi=aucs["hsi"], auc_rgb=aucs["rgb"]))
        logger.info("ablation seed finished", extra={"seed": seed, **aucs})
    report.write(layout.reports)
    return report


def partition_counts(splits: DatasetSplits) -> dict[str, dict[str, int]]:
    """Per-partition real/fake counts plus the manifest total."""
    counts = splits.counts()
    counts["total"] = {
        label: sum(counts[name][label] for name in ("train", "val", "test")) for label in ("real", "fake")
    }
    return counts

