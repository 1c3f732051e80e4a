"""Training loop, checkpoint selection and corruption-aware evaluation.

In sequential mode (one worker) a run is bit-deterministic given its seed,
configuration and dataset. Evaluation may fan out fixed-size chunks to a
thread pool; predictions are reassembled in sample order before any metric
is reduced, so the numbers do not depend on the worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data.corruptions import NoiseSpec, corrupt_batch
from ..data.dataset import DatasetManifest, SplitArrays, load_split
from ..models.checkpoint import Checkpoint, TrainingMeta, load_checkpoint, save_checkpoint
from ..models.vit import ModelConfig, TransForSeg
from ..utils.timing import FindTime
from .errors import CompatibilityError, ConfigError, NonFiniteError, TrainingAbortedError
from .losses import LossBreakdown, LossWeights, force_loss, seg_loss, total_loss
from .metrics import HISTOGRAM_BINS, SegmentationMetrics, error_histogram, regression_metrics, segmentation_metrics
from .optim import OptimizerState, adam_step
from .report import EpochRecord, EvalReport, summarize_reports, write_curves, write_json
from .tensor import ComputationRecord, Tensor, backward, no_record

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.tfsg"
EVAL_CHUNK = 32


@dataclass(frozen=True)
class TrainConfig:
    dataset: str
    model: ModelConfig = field(default_factory=lambda: ModelConfig.preset("desk"))
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-4
    seed: int = 0
    checkpoint_dir: str = "runs"
    eval_every: int = 1
    weights: LossWeights = LossWeights()
    workers: int = 1

    def validate(self) -> TrainConfig:
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"train.learning_rate must be >= 0, got {self.learning_rate}")
        if self.eval_every < 1:
            raise ConfigError(f"train.eval_every must be >= 1, got {self.eval_every}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")
        self.model.validate()
        return self

    @property
    def effective_weights(self) -> LossWeights:
        """TransForcer has no segmentation terms whatever the configured weights."""
        if not self.model.with_segmentation_heads:
            return replace(self.weights, seg_top=0.0, seg_side=0.0)
        return self.weights


@dataclass
class TrainResult:
    checkpoint_path: Path
    checkpoint: Checkpoint
    report: EvalReport
    curves: list[EpochRecord]
    saved_val_mse: list[float]


def check_compatible(config: ModelConfig, manifest: DatasetManifest) -> None:
    if config.image_size != manifest.scene.image_size:
        raise CompatibilityError(
            f"model expects {config.image_size}px images, dataset {manifest.dataset_id} "
            f"has {manifest.scene.image_size}px"
        )


def _as_tensor(array: np.ndarray) -> Tensor:
    return Tensor(array, dtype=np.float32)


def compute_losses(
    model: TransForSeg, batch: SplitArrays, weights: LossWeights
) -> LossBreakdown:
    out = model(_as_tensor(batch.top), _as_tensor(batch.side))
    l_force = force_loss(out.force, _as_tensor(batch.forces))
    l_top = l_side = None
    if out.seg_top is not None and weights.seg_top > 0:
        l_top = seg_loss(out.seg_top, _as_tensor(batch.mask_top))
    if out.seg_side is not None and weights.seg_side > 0:
        l_side = seg_loss(out.seg_side, _as_tensor(batch.mask_side))
    return LossBreakdown(total_loss(l_force, l_top, l_side, weights), l_force, l_top, l_side)


def train_step(
    model: TransForSeg, batch: SplitArrays, weights: LossWeights, state: OptimizerState
) -> LossBreakdown:
    """Forward, backward and one Adam update on ``batch``."""
    with ComputationRecord() as record:
        losses = compute_losses(model, batch, weights)
    gradients = backward(record, losses.total)
    grads = {name: gradients[t] for name, t in model.params.items() if t in gradients}
    adam_step(model.params, grads, state)
    return losses


@dataclass
class Predictions:
    force: np.ndarray
    seg_top: np.ndarray | None
    seg_side: np.ndarray | None


def predict(model: TransForSeg, data: SplitArrays, workers: int = 1) -> Predictions:
    """Forward every sample in chunks of ``EVAL_CHUNK`` without recording."""
    starts = list(range(0, len(data), EVAL_CHUNK))

    def run(start: int) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
        chunk = data.take(np.arange(start, min(start + EVAL_CHUNK, len(data))))
        with no_record():
            out = model(_as_tensor(chunk.top), _as_tensor(chunk.side))
        return (
            out.force.numpy(),
            out.seg_top.numpy() if out.seg_top is not None else None,
            out.seg_side.numpy() if out.seg_side is not None else None,
        )

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]

    def stack(i: int) -> np.ndarray | None:
        if parts[0][i] is None:
            return None
        return np.concatenate([p[i] for p in parts])

    return Predictions(np.concatenate([p[0] for p in parts]), stack(1), stack(2))


def _bce(pred: np.ndarray, target: np.ndarray) -> float:
    with no_record():
        return seg_loss(Tensor(pred, dtype=np.float64), Tensor(target, dtype=np.float64)).item()


def _validation_pass(
    model: TransForSeg, val: SplitArrays, weights: LossWeights, workers: int
) -> tuple[float, float, dict[str, SegmentationMetrics]]:
    """Returns (total loss, force MSE, per-head segmentation metrics)."""
    preds = predict(model, val, workers)
    mse = float(np.mean((preds.force - val.forces) ** 2))
    total = weights.force * mse
    seg: dict[str, SegmentationMetrics] = {}
    if preds.seg_top is not None and preds.seg_side is not None:
        total += weights.seg_top * _bce(preds.seg_top, val.mask_top)
        total += weights.seg_side * _bce(preds.seg_side, val.mask_side)
        seg["top"] = segmentation_metrics(preds.seg_top, val.mask_top)
        seg["side"] = segmentation_metrics(preds.seg_side, val.mask_side)
    return total, mse, seg


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train(cfg: TrainConfig, manifest: DatasetManifest | None = None) -> TrainResult:
    """Fit one model; keeps the checkpoint with the lowest validation force MSE."""
    cfg.validate()
    manifest = manifest or DatasetManifest.load(cfg.dataset)
    check_compatible(cfg.model, manifest)
    weights = cfg.effective_weights
    out_dir = Path(cfg.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_data = load_split(manifest, "train", cfg.model.channels)
    val_data = load_split(manifest, "val", cfg.model.channels)
    model = TransForSeg.init(cfg.model, seed=cfg.seed)
    state = OptimizerState(cfg.learning_rate)
    shuffle = np.random.default_rng([cfg.seed, len(train_data)])
    best_path = out_dir / BEST_CHECKPOINT
    best_mse = float("inf")
    saved: list[float] = []
    curves: list[EpochRecord] = []

    logger.info(
        f"Training {model.name} ({cfg.model.variant}) on {len(train_data)} samples for {cfg.epochs} epochs, "
        f"batch {cfg.batch_size}, lr {cfg.learning_rate}, seed {cfg.seed}"
    )
    for epoch in range(1, cfg.epochs + 1):
        totals, forces = [], []
        with FindTime(f"epoch {epoch}"):
            for batch_index, rows in enumerate(_batches(len(train_data), cfg.batch_size, shuffle), start=1):
                try:
                    losses = train_step(model, train_data.take(rows), weights, state)
                except NonFiniteError as e:
                    logger.error(f"Non-finite value at epoch {epoch}, batch {batch_index}: {e}")
                    raise TrainingAbortedError(str(e), epoch, batch_index) from e
                totals.append(losses.total.item())
                forces.append(losses.force.item())

        if epoch % cfg.eval_every and epoch != cfg.epochs:
            continue
        try:
            val_total, val_mse, val_seg = _validation_pass(model, val_data, weights, cfg.workers)
        except NonFiniteError as e:
            raise TrainingAbortedError(f"validation: {e}", epoch, 0) from e
        record = EpochRecord(
            epoch=epoch,
            train_total=float(np.mean(totals)),
            val_total=val_total,
            train_force=float(np.mean(forces)),
            val_force=val_mse,
            val_miou_top=val_seg["top"].miou if "top" in val_seg else None,
            val_miou_side=val_seg["side"].miou if "side" in val_seg else None,
        )
        curves.append(record)
        logger.info(
            f"epoch {epoch}: train {record.train_total:.5f} (force {record.train_force:.3e}) "
            f"val {val_total:.5f} (force MSE {val_mse:.3e})"
            + (f" mIoU top {record.val_miou_top:.4f} side {record.val_miou_side:.4f}" if val_seg else "")
        )
        if val_mse < best_mse:
            best_mse = val_mse
            saved.append(val_mse)
            meta = TrainingMeta(epoch=epoch, val_mse=val_mse, seed=cfg.seed)
            save_checkpoint(model.params, cfg.model, meta, best_path)

    write_curves(curves, out_dir)
    checkpoint = load_checkpoint(best_path)
    report = evaluate(checkpoint, manifest, "test", workers=cfg.workers)
    report.loss_curves = curves
    report.write(out_dir / "report.json")
    return TrainResult(best_path, checkpoint, report, curves, saved)


def evaluate(
    checkpoint: Checkpoint,
    manifest: DatasetManifest,
    split: str = "test",
    corruption: NoiseSpec | None = None,
    workers: int = 1,
    data: SplitArrays | None = None,
    hist_bins: int = HISTOGRAM_BINS,
) -> EvalReport:
    """Metrics of ``checkpoint`` on ``split``; ``corruption`` touches input images only."""
    check_compatible(checkpoint.config, manifest)
    model = checkpoint.model()
    with FindTime(f"evaluate {split} ({corruption.kind if corruption else 'clean'})") as timer:
        data = data if data is not None else load_split(manifest, split, checkpoint.config.channels)  # type: ignore[arg-type]
        if corruption is not None:
            data = data.with_images(corrupt_batch(data.top, corruption, 0), corrupt_batch(data.side, corruption, 1))
        preds = predict(model, data, workers)

    segmentation: dict[str, SegmentationMetrics] = {}
    if preds.seg_top is not None and preds.seg_side is not None:
        segmentation["top"] = segmentation_metrics(preds.seg_top, data.mask_top)
        segmentation["side"] = segmentation_metrics(preds.seg_side, data.mask_side)
        segmentation["mean"] = SegmentationMetrics.average([segmentation["top"], segmentation["side"]])

    limit = manifest.scene.force_range or 1.0
    report = EvalReport(
        dataset_id=manifest.dataset_id,
        split=split,
        model=model.name,
        variant=checkpoint.config.variant,
        samples=len(data),
        regression=regression_metrics(preds.force, data.forces),
        segmentation=segmentation,
        histogram=error_histogram(preds.force, data.forces, limit, hist_bins),
        corruption=corruption.to_dict() if corruption else None,
        runtime_s=timer.elapsed_s,
    )
    logger.info(
        f"{report.label} {split}: MSE {report.regression.mse:.4e} R2 {report.regression.r2:.4f}"
        + (f" mIoU {report.mean_miou:.4f}" if report.mean_miou is not None else "")
    )
    return report


def evaluate_suite(
    checkpoint: Checkpoint,
    manifest: DatasetManifest,
    specs: list[NoiseSpec],
    split: str = "test",
    workers: int = 1,
    hist_bins: int = HISTOGRAM_BINS,
) -> tuple[EvalReport, list[EvalReport]]:
    """Clean report plus one report per corruption, all on the same loaded split."""
    data = load_split(manifest, split, checkpoint.config.channels)  # type: ignore[arg-type]
    clean = evaluate(checkpoint, manifest, split, None, workers, data, hist_bins)
    return clean, [evaluate(checkpoint, manifest, split, spec, workers, data, hist_bins) for spec in specs]


def train_seeds(cfg: TrainConfig, seeds: list[int]) -> tuple[list[TrainResult], dict[str, dict[str, float]]]:
    """Independent runs under ``checkpoint_dir/seed<N>``; returns mean and std of their test metrics."""
    manifest = DatasetManifest.load(cfg.dataset)
    results = []
    for seed in seeds:
        run_dir = os.path.join(cfg.checkpoint_dir, f"seed{seed}")
        results.append(train(replace(cfg, seed=seed, checkpoint_dir=run_dir), manifest))
    summary = summarize_reports([r.report for r in results])
    write_json(Path(cfg.checkpoint_dir) / "summary.json", {"seeds": seeds, "metrics": summary})
    return results, summary


@dataclass
class AblationResult:
    seeds: list[int]
    with_seg_mse: list[float]
    regression_only_mse: list[float]

    @property
    def wins(self) -> int:
        """Seeds on which the segmentation-supervised model has the lower test MSE."""
        return sum(a <= b for a, b in zip(self.with_seg_mse, self.regression_only_mse, strict=True))

    @property
    def improvement_percent(self) -> float:
        with_seg = float(np.mean(self.with_seg_mse))
        without = float(np.mean(self.regression_only_mse))
        return 100.0 * (without - with_seg) / without if without > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "transforseg_mse": self.with_seg_mse,
            "transforcer_mse": self.regression_only_mse,
            "wins": self.wins,
            "improvement_percent": self.improvement_percent,
        }


def compare_ablation(cfg: TrainConfig, seeds: list[int]) -> AblationResult:
    """Train TransForSeg and TransForcer on matched seeds and compare test force MSE."""
    manifest = DatasetManifest.load(cfg.dataset)
    with_seg, without = [], []
    for seed in seeds:
        base = Path(cfg.checkpoint_dir) / f"seed{seed}"
        seg_cfg = replace(
            cfg,
            seed=seed,
            checkpoint_dir=str(base / "transforseg"),
            model=replace(cfg.model, with_segmentation_heads=True),
        )
        forcer_cfg = replace(
            cfg,
            seed=seed,
            checkpoint_dir=str(base / "transforcer"),
            model=replace(cfg.model, with_segmentation_heads=False),
        )
        with_seg.append(train(seg_cfg, manifest).report.regression.mse)
        without.append(train(forcer_cfg, manifest).report.regression.mse)
    result = AblationResult(seeds, with_seg, without)
    write_json(Path(cfg.checkpoint_dir) / "ablation.json", result.to_dict())
    logger.info(
        f"Ablation: TransForSeg wins {result.wins}/{len(seeds)} seeds, "
        f"mean MSE improvement {result.improvement_percent:.1f}%"
    )
    return result
