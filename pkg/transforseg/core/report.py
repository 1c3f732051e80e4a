"""Evaluation reports, loss curves and the derived comparison tables.

All JSON goes through :func:`write_json`, which writes atomically.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..utils.io import write_atomic
from .metrics import ErrorHistogram, RegressionMetrics, SegmentationMetrics

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["epoch", "train_total", "val_total", "train_force", "val_force", "val_miou_top", "val_miou_side"]
BLUR_KINDS = ("motion", "defocus")
POINT_NOISE_KINDS = ("impulse", "poisson")


def write_json(path: str | os.PathLike, data: Any) -> Path:
    text = json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"
    return write_atomic(path, text.encode("utf-8"))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_total: float
    val_total: float
    train_force: float
    val_force: float
    val_miou_top: float | None = None
    val_miou_side: float | None = None


def curves_csv(curves: list[EpochRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for rec in curves:
        writer.writerow(["" if v is None else repr(v) for v in (getattr(rec, c) for c in CURVE_COLUMNS)])
    return buffer.getvalue()


def write_curves(curves: list[EpochRecord], directory: str | os.PathLike) -> tuple[Path, Path]:
    directory = Path(directory)
    csv_path = write_atomic(directory / "loss_curves.csv", curves_csv(curves).encode("utf-8"))
    json_path = write_json(directory / "loss_curves.json", [asdict(c) for c in curves])
    return csv_path, json_path


@dataclass
class EvalReport:
    dataset_id: str
    split: str
    model: str
    variant: str
    samples: int
    regression: RegressionMetrics
    segmentation: dict[str, SegmentationMetrics]
    histogram: ErrorHistogram
    corruption: dict[str, Any] | None = None
    loss_curves: list[EpochRecord] = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def label(self) -> str:
        return self.corruption["kind"] if self.corruption else "clean"

    @property
    def mean_miou(self) -> float | None:
        mean = self.segmentation.get("mean")
        return mean.miou if mean is not None else None

    def metrics_dict(self) -> dict[str, Any]:
        """Every field that depends only on the model and the data."""
        return {
            "regression": self.regression.to_dict(),
            "segmentation": {head: m.to_dict() for head, m in self.segmentation.items()},
            "histogram": self.histogram.to_dict(),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "split": self.split,
            "model": self.model,
            "variant": self.variant,
            "samples": self.samples,
            "corruption": self.corruption,
            **self.metrics_dict(),
            "loss_curves": [asdict(c) for c in self.loss_curves],
            "runtime_s": self.runtime_s,
        }

    def write(self, path: str | os.PathLike) -> Path:
        target = write_json(path, self.to_dict())
        logger.info(f"Wrote {self.label} {self.split} report to {target}")
        return target


@dataclass(frozen=True)
class RobustnessRow:
    kind: str
    mse: float
    mse_ratio: float | None
    miou: float | None
    miou_drop: float | None

    def cells(self) -> list[str]:
        miou = "-" if self.miou is None else f"{100 * self.miou:.2f}"
        drop = "-" if self.miou_drop is None else f"{self.miou_drop:+.2f}"
        return [self.kind, f"{self.mse:.3e}", "-" if self.mse_ratio is None else f"({self.mse_ratio:.1f}x)", miou, drop]


@dataclass
class RobustnessTable:
    clean: RobustnessRow
    rows: list[RobustnessRow]

    @property
    def blur_ordering_holds(self) -> bool | None:
        """Whether both blurs cost more mIoU than both point-noise kinds."""
        drops = {row.kind: row.miou_drop for row in self.rows}
        needed = BLUR_KINDS + POINT_NOISE_KINDS
        if any(drops.get(kind) is None for kind in needed):
            return None
        blur = max(drops[k] for k in BLUR_KINDS)  # drops are negative points
        point = min(drops[k] for k in POINT_NOISE_KINDS)
        return blur < point

    def render(self) -> str:
        header = ["noise", "MSE", "vs clean", "mIoU %", "drop (pts)"]
        lines = [header, self.clean.cells(), *(row.cells() for row in self.rows)]
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths, strict=True)) for line in lines)

    def to_dict(self) -> dict[str, Any]:
        return {
            "clean": asdict(self.clean),
            "rows": [asdict(row) for row in self.rows],
            "blur_ordering_holds": self.blur_ordering_holds,
        }


def robustness_table(clean: EvalReport, corrupted: list[EvalReport]) -> RobustnessTable:
    """MSE multipliers and mIoU point drops of each corrupted run against the clean run."""

    def row(report: EvalReport) -> RobustnessRow:
        ratio = report.regression.mse / clean.regression.mse if clean.regression.mse > 0 else None
        miou, base = report.mean_miou, clean.mean_miou
        drop = None if miou is None or base is None else 100.0 * (miou - base)
        return RobustnessRow(report.label, report.regression.mse, ratio, miou, drop)

    return RobustnessTable(clean=row(clean), rows=[row(r) for r in corrupted])


def summarize_reports(reports: list[EvalReport]) -> dict[str, dict[str, float]]:
    """Mean and sample standard deviation of the headline metrics across runs."""
    columns: dict[str, list[float]] = {"mse": [], "mae": [], "rmse": [], "r2": []}
    for report in reports:
        for key in ("mse", "mae", "rmse", "r2"):
            columns[key].append(getattr(report.regression, key))
        for head, seg in report.segmentation.items():
            for key in ("acc", "miou", "mdice"):
                columns.setdefault(f"{key}_{head}", []).append(getattr(seg, key))
    summary = {}
    for key, values in columns.items():
        array = np.asarray(values, dtype=np.float64)
        std = float(array.std(ddof=1)) if array.size > 1 else 0.0
        summary[key] = {"mean": float(array.mean()), "std": std}
    return summary


def render_summary(summary: dict[str, dict[str, float]]) -> str:
    width = max(len(k) for k in summary)
    return "\n".join(
        f"{key.ljust(width)}  {stats['mean']:.6g} ± {stats['std']:.2g}" for key, stats in summary.items()
    )
