"""Loss-history tracking for training runs.

Records one row per logged step, writes the rows as CSV and renders Rich
summaries for the CLI.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from dataclasses import field
from datetime import datetime
from pathlib import Path

from rich.console import Console
from rich.table import Table

from .custom_exceptions import DataIOError

console = Console()


@dataclass
class StepRecord:
    """Logged values for one optimisation step."""

    step: int
    values: dict[str, float]
    timestamp: datetime = field(default_factory=datetime.now)

    def __getitem__(self, column: str) -> float:
        return self.values[column]


@dataclass
class TrainingHistory:
    """Ordered step records of one training run.

    ``columns`` fixes the CSV layout; the timestamps never reach the CSV so
    reruns with the same seed produce byte-identical files.
    """

    name: str
    columns: tuple[str, ...]
    start_time: datetime = field(default_factory=datetime.now)
    records: list[StepRecord] = field(default_factory=list)

    def add(self, step: int, **values: float) -> StepRecord:
        missing = set(self.columns) - set(values)
        if missing:
            raise ValueError(f"history row for step {step} lacks {sorted(missing)}")
        record = StepRecord(step=step, values={c: float(values[c]) for c in self.columns})
        self.records.append(record)
        return record

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list[float]:
        return [r.values[name] for r in self.records]

    @property
    def first(self) -> StepRecord | None:
        return self.records[0] if self.records else None

    @property
    def last(self) -> StepRecord | None:
        return self.records[-1] if self.records else None

    @property
    def duration(self) -> float:
        """Seconds since the history was created; logged when a run finishes."""
        return (datetime.now() - self.start_time).total_seconds()

    def window_means(self, column: str, window: int) -> list[float]:
        """Means of ``column`` over consecutive non-overlapping step windows."""
        buckets: dict[int, list[float]] = {}
        for record in self.records:
            buckets.setdefault(record.step // window, []).append(record.values[column])
        return [sum(v) / len(v) for _, v in sorted(buckets.items())]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("step", *self.columns))
        for record in self.records:
            writer.writerow((record.step, *(repr(record.values[c]) for c in self.columns)))
        return buffer.getvalue()

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot write loss history {path}: {exc}") from exc
        return path

    def display_summary(self, out: Console | None = None) -> None:
        """Print first/last/min per column."""
        if not self.records:
            return
        out = out or console
        table = Table(
            title=f"[bold cyan]{self.name} loss summary[/bold cyan]",
            show_header=True,
            header_style="bold blue",
        )
        table.add_column("Column", style="bold cyan")
        table.add_column("First", justify="right")
        table.add_column("Last", style="green", justify="right")
        table.add_column("Min", style="dim", justify="right")
        for name in self.columns:
            values = self.column(name)
            table.add_row(name, f"{values[0]:.5f}", f"{values[-1]:.5f}", f"{min(values):.5f}")
        table.add_row("steps", str(self.records[0].step), str(self.records[-1].step), "")
        out.print(table)
        out.print()
