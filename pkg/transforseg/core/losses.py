"""Multitask objective: force MSE, per-head BCE and their weighted sum."""

from __future__ import annotations

from dataclasses import dataclass

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    """Weights of the force term and of the top-view and side-view segmentation terms.

    The top view's tokens come straight from the shared trunk (the encoder
    side of the fusion block); the side view's come out of the fusion block.
    """

    force: float = 1.0
    seg_top: float = 1.0
    seg_side: float = 1.0

    def __post_init__(self) -> None:
        for name in ("force", "seg_top", "seg_side"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def regression_only(cls) -> LossWeights:
        return cls(1.0, 0.0, 0.0)


@dataclass
class LossBreakdown:
    total: Tensor
    force: Tensor
    seg_top: Tensor | None = None
    seg_side: Tensor | None = None

    def values(self) -> dict[str, float | None]:
        return {
            "total": self.total.item(),
            "force": self.force.item(),
            "seg_top": self.seg_top.item() if self.seg_top is not None else None,
            "seg_side": self.seg_side.item() if self.seg_side is not None else None,
        }


def force_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Batch mean of ``||pred - target||^2 / 3``."""
    if pred.shape != target.shape:
        raise DimensionError(f"force_loss: prediction {pred.shape} and target {target.shape} differ")
    diff = ops.sub(pred, target)
    return ops.mean(ops.mul(diff, diff))


def seg_loss(pred_map: Tensor, target_mask: Tensor) -> Tensor:
    if pred_map.shape != target_mask.shape:
        raise DimensionError(
            f"seg_loss: prediction {pred_map.shape} and mask {target_mask.shape} differ"
        )
    return ops.binary_cross_entropy(pred_map, target_mask)


def total_loss(
    l_force: Tensor,
    l_seg_top: Tensor | None,
    l_seg_side: Tensor | None,
    weights: LossWeights = LossWeights(),
) -> Tensor:
    """Weighted sum; terms with zero weight or no value are left out of the graph."""
    terms = [
        (weights.force, l_force),
        (weights.seg_top, l_seg_top),
        (weights.seg_side, l_seg_side),
    ]
    total: Tensor | None = None
    for weight, term in terms:
        if weight == 0 or term is None:
            continue
        weighted = term if weight == 1 else ops.scale(term, weight)
        total = weighted if total is None else ops.add(total, weighted)
    if total is None:
        raise ConfigError("every loss term has zero weight")
    return total
