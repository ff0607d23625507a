"""ROC/AUC and the cross-manipulation protocol.

Fake is the positive class throughout. Thresholds are placed at distinct
score values only, so tied scores move together and the trapezoidal area
equals ``P(score_fake > score_real) + ½·P(tie)`` exactly; the area is
accumulated in integer counts and divided once.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Mapping
from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

from .custom_exceptions import DataIOError
from .custom_exceptions import EvaluationError
from .custom_exceptions import ProtocolError
from .detector_network import DetectorConfig
from .detector_network import score_samples
from .detector_training import PairArrays
from .engine.params import ParameterStore
from .manipulations import parse_kind
from .spectral_types import Label
from .spectral_types import ManipulationKind

logger = logging.getLogger(__name__)

LabelLike = Label | str | int
POSITIVE_CLASS = Label.fake.value


@dataclass(frozen=True)
class RocCurve:
    """ROC points from (0, 0) to (1, 1); ``thresholds[i]`` produced point ``i``."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _binary_labels(labels: Sequence[LabelLike]) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        if isinstance(label, Label):
            out[i] = label.index
        elif isinstance(label, str):
            out[i] = Label(label).index
        else:
            out[i] = int(label)
    if np.any((out != 0) & (out != 1)):
        raise EvaluationError("labels must be real/fake (0/1)")
    return out


def _validated(scores: Sequence[float], labels: Sequence[LabelLike]) -> tuple[np.ndarray, np.ndarray]:
    scores_arr = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels_arr = _binary_labels(labels)
    if scores_arr.shape != labels_arr.shape:
        raise EvaluationError(f"{scores_arr.size} scores for {labels_arr.size} labels")
    if not np.all(np.isfinite(scores_arr)):
        raise EvaluationError("scores must be finite")
    positives = int(labels_arr.sum())
    if positives == 0 or positives == labels_arr.size:
        raise EvaluationError("ROC needs both real and fake samples")
    return scores_arr, labels_arr


def _roc_counts(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (fp, tp) counts at each distinct threshold, descending."""
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    tp = np.cumsum(labels)[last_of_group]
    fp = (last_of_group + 1) - tp
    return np.r_[0, fp], np.r_[0, tp], np.r_[np.inf, scores[last_of_group]]


def roc_curve(scores: Sequence[float], labels: Sequence[LabelLike]) -> RocCurve:
    scores_arr, labels_arr = _validated(scores, labels)
    fp, tp, thresholds = _roc_counts(scores_arr, labels_arr)
    return RocCurve(fpr=fp / fp[-1], tpr=tp / tp[-1], thresholds=thresholds)


def auc(scores: Sequence[float], labels: Sequence[LabelLike]) -> float:
    """Trapezoidal area under ``roc_curve``."""
    scores_arr, labels_arr = _validated(scores, labels)
    fp, tp, _ = _roc_counts(scores_arr, labels_arr)
    # twice the area in count units: Σ Δfp · (tp_i + tp_{i-1})
    doubled = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return doubled / (2 * int(fp[-1]) * int(tp[-1]))


def pairwise_auc(scores: Sequence[float], labels: Sequence[LabelLike]) -> float:
    """O(n²) oracle: wins plus half-credit ties over all fake–real pairs."""
    scores_arr, labels_arr = _validated(scores, labels)
    fakes = scores_arr[labels_arr == 1]
    reals = scores_arr[labels_arr == 0]
    wins = int(np.sum(fakes[:, None] > reals[None, :]))
    ties = int(np.sum(fakes[:, None] == reals[None, :]))
    return (2 * wins + ties) / (2 * fakes.size * reals.size)


@dataclass
class ReportTable:
    """AUC per (train kind, test kind) with row averages."""

    rows: dict[ManipulationKind, dict[ManipulationKind, float]] = field(default_factory=dict)

    def add(self, train_kind: ManipulationKind, test_kind: ManipulationKind, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise EvaluationError(f"AUC {value} outside [0, 1]")
        self.rows.setdefault(train_kind, {})[test_kind] = value

    def merge(self, other: ReportTable) -> ReportTable:
        for train_kind, row in other.rows.items():
            for test_kind, value in row.items():
                self.add(train_kind, test_kind, value)
        return self

    def train_kinds(self) -> list[ManipulationKind]:
        return [k for k in ManipulationKind if k in self.rows]

    def test_kinds(self) -> list[ManipulationKind]:
        seen = {k for row in self.rows.values() for k in row}
        return [k for k in ManipulationKind if k in seen]

    def avg(self, train_kind: ManipulationKind) -> float:
        values = list(self.rows[train_kind].values())
        return sum(values) / len(values)

    def avg_unseen(self, train_kind: ManipulationKind) -> float | None:
        values = [v for k, v in self.rows[train_kind].items() if k is not train_kind]
        return sum(values) / len(values) if values else None

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("train_kind", "test_kind", "auc"))
        for train_kind in self.train_kinds():
            for test_kind in ManipulationKind:
                if test_kind in self.rows[train_kind]:
                    writer.writerow(
                        (train_kind.value, test_kind.value, repr(self.rows[train_kind][test_kind]))
                    )
        return buffer.getvalue()

    def to_summary(self) -> dict:
        return {
            "positive_class": POSITIVE_CLASS,
            "rows": [
                {
                    "train_kind": train_kind.value,
                    "auc": {
                        k.value: self.rows[train_kind][k]
                        for k in ManipulationKind
                        if k in self.rows[train_kind]
                    },
                    "avg": self.avg(train_kind),
                    "avg_unseen": self.avg_unseen(train_kind),
                }
                for train_kind in self.train_kinds()
            ],
        }

    def write(self, reports_dir: Path, stem: str = "report") -> tuple[Path, Path]:
        reports_dir = Path(reports_dir)
        csv_path = reports_dir / f"{stem}.csv"
        json_path = reports_dir / f"{stem}.json"
        try:
            reports_dir.mkdir(parents=True, exist_ok=True)
            csv_path.write_text(self.to_csv(), encoding="utf-8")
            json_path.write_text(json.dumps(self.to_summary(), indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot write report to {reports_dir}: {exc}") from exc
        return csv_path, json_path

    def display(self, out: Console) -> None:
        table = Table(
            title="[bold cyan]Cross-manipulation AUC (positive class: fake)[/bold cyan]",
            show_header=True,
            header_style="bold blue",
        )
        table.add_column("Train \\ Test", style="bold cyan")
        test_kinds = self.test_kinds()
        for kind in test_kinds:
            table.add_column(kind.value, justify="right")
        table.add_column("AVG", style="bold green", justify="right")
        table.add_column("AVG unseen", style="green", justify="right")
        for train_kind in self.train_kinds():
            row = self.rows[train_kind]
            unseen = self.avg_unseen(train_kind)
            table.add_row(
                train_kind.value,
                *(f"{row[k]:.4f}" if k in row else "-" for k in test_kinds),
                f"{self.avg(train_kind):.4f}",
                "-" if unseen is None else f"{unseen:.4f}",
            )
        out.print(table)


@dataclass(frozen=True)
class TrainedDetector:
    """Detector parameters plus what the protocol needs to know about training."""

    params: ParameterStore
    cfg: DetectorConfig
    train_kinds: tuple[ManipulationKind, ...]
    train_scene_seeds: frozenset[int]


def score_pairs(
    model: TrainedDetector, data: PairArrays, batch_size: int = 32
) -> tuple[np.ndarray, np.ndarray]:
    """Fake-class probabilities and 0/1 labels for every sample in ``data``."""
    scores = np.concatenate(
        [
            score_samples(model.params, model.cfg, data.real, batch_size),
            score_samples(model.params, model.cfg, data.fake, batch_size),
        ]
    )
    labels = np.r_[np.zeros(len(data), dtype=np.int64), np.ones(len(data), dtype=np.int64)]
    return scores, labels


def cross_manipulation_eval(
    model: TrainedDetector,
    test_sets: Mapping[ManipulationKind | str, PairArrays],
    batch_size: int = 32,
) -> ReportTable:
    """AUC of the binary head on every test kind, as one report row.

    Samples are scored ``batch_size`` at a time.

    Raises:
        ProtocolError: If the model was not trained on exactly one kind or a
            test scene was also used for training.
    """
    if len(model.train_kinds) != 1:
        raise ProtocolError(
            f"cross-manipulation evaluation needs a detector trained on exactly one kind, "
            f"got {[k.value for k in model.train_kinds]}"
        )
    train_kind = model.train_kinds[0]
    table = ReportTable()
    for kind_like, data in test_sets.items():
        kind = parse_kind(kind_like)
        overlap = model.train_scene_seeds & set(data.scene_seeds)
        if overlap:
            raise ProtocolError(
                f"{len(overlap)} {kind.value} test scenes were also used for training"
            )
        scores, labels = score_pairs(model, data, batch_size)
        value = auc(scores, labels)
        table.add(train_kind, kind, value)
        logger.info(
            "evaluated test kind",
            extra={"train_kind": train_kind.value, "test_kind": kind.value, "auc": value, "samples": len(scores)},
        )
    return table
