"""Evaluation metrics for force regression and binary segmentation.

Everything here works on plain numpy arrays in float64.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import DimensionError, MetricError

HISTOGRAM_BINS = 41
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class RegressionMetrics:
    mse: float
    mae: float
    rmse: float
    r2: float
    r2_per_axis: tuple[float, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["r2_per_axis"] = list(self.r2_per_axis)
        return data


@dataclass(frozen=True)
class SegmentationMetrics:
    acc: float
    miou: float
    mdice: float
    # (background, catheter)
    iou: tuple[float, float] = (1.0, 1.0)
    dice: tuple[float, float] = (1.0, 1.0)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["iou"] = list(self.iou)
        data["dice"] = list(self.dice)
        return data

    @classmethod
    def average(cls, items: list[SegmentationMetrics]) -> SegmentationMetrics:
        if not items:
            raise MetricError("cannot average an empty list of segmentation metrics")
        return cls(
            acc=float(np.mean([m.acc for m in items])),
            miou=float(np.mean([m.miou for m in items])),
            mdice=float(np.mean([m.mdice for m in items])),
            iou=tuple(float(v) for v in np.mean([m.iou for m in items], axis=0)),  # type: ignore[arg-type]
            dice=tuple(float(v) for v in np.mean([m.dice for m in items], axis=0)),  # type: ignore[arg-type]
        )


def regression_metrics(preds: np.ndarray, targets: np.ndarray) -> RegressionMetrics:
    """MSE, MAE and RMSE over all components; R^2 per component, then averaged."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise DimensionError(f"regression_metrics: {preds.shape} vs {targets.shape}")
    if preds.ndim == 1:
        preds, targets = preds[:, None], targets[:, None]
    if preds.shape[0] < 2:
        raise MetricError(f"R^2 needs at least 2 samples, got {preds.shape[0]}")

    err = preds - targets
    mse = float(np.mean(err**2))
    ss_res = np.sum(err**2, axis=0)
    ss_tot = np.sum((targets - targets.mean(axis=0)) ** 2, axis=0)
    if np.any(ss_tot == 0):
        flat = [AXES[i] if i < len(AXES) else str(i) for i in np.flatnonzero(ss_tot == 0)]
        raise MetricError(f"R^2 undefined: zero target variance on component(s) {flat}")
    r2_axes = 1.0 - ss_res / ss_tot
    return RegressionMetrics(
        mse=mse,
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(mse)),
        r2=float(np.mean(r2_axes)),
        r2_per_axis=tuple(float(v) for v in r2_axes),
    )


def _class_scores(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    intersection = np.count_nonzero(pred & target)
    union = np.count_nonzero(pred | target)
    total = np.count_nonzero(pred) + np.count_nonzero(target)
    if union == 0:
        return 1.0, 1.0
    return intersection / union, 2.0 * intersection / total


def _single(pred: np.ndarray, target: np.ndarray) -> SegmentationMetrics:
    bg_iou, bg_dice = _class_scores(~pred, ~target)
    fg_iou, fg_dice = _class_scores(pred, target)
    return SegmentationMetrics(
        acc=float(np.mean(pred == target)),
        miou=(bg_iou + fg_iou) / 2.0,
        mdice=(bg_dice + fg_dice) / 2.0,
        iou=(bg_iou, fg_iou),
        dice=(bg_dice, fg_dice),
    )


def segmentation_metrics(
    pred_map: np.ndarray, target_mask: np.ndarray, threshold: float = 0.5
) -> SegmentationMetrics:
    """Accuracy and class-averaged IoU / Dice over background and catheter.

    A 2-d input is one image; for ``[N, H, W]`` the per-image scores are
    averaged. A class absent from both prediction and target scores 1.
    """
    pred_map = np.asarray(pred_map)
    target_mask = np.asarray(target_mask)
    if pred_map.shape != target_mask.shape:
        raise DimensionError(f"segmentation_metrics: {pred_map.shape} vs {target_mask.shape}")
    pred = pred_map >= threshold
    target = target_mask > 0.5
    if pred.ndim == 2:
        return _single(pred, target)
    if pred.ndim != 3:
        raise DimensionError(f"segmentation_metrics expects [H, W] or [N, H, W], got {pred.shape}")
    return SegmentationMetrics.average([_single(p, t) for p, t in zip(pred, target, strict=True)])


@dataclass(frozen=True)
class ErrorHistogram:
    edges: list[float]
    counts: dict[str, list[int]]

    def to_dict(self) -> dict[str, Any]:
        return {"edges": self.edges, "counts": self.counts}


def error_histogram(
    preds: np.ndarray, targets: np.ndarray, limit: float, bins: int = HISTOGRAM_BINS
) -> ErrorHistogram:
    """Per-axis histogram of ``pred - target`` over ``[-limit, limit]``.

    Errors beyond the range land in the edge bins, so each axis counts every sample.
    """
    if limit <= 0:
        raise MetricError(f"histogram limit must be positive, got {limit}")
    err = np.asarray(preds, dtype=np.float64) - np.asarray(targets, dtype=np.float64)
    if err.ndim == 1:
        err = err[:, None]
    edges = np.linspace(-limit, limit, bins + 1)
    clipped = np.clip(err, -limit, limit)
    counts = {
        AXES[i] if i < len(AXES) else str(i): np.histogram(clipped[:, i], bins=edges)[0].astype(int).tolist()
        for i in range(err.shape[1])
    }
    return ErrorHistogram(edges=edges.tolist(), counts=counts)
