import json

import numpy as np
import pytest

from transforseg.core.errors import DimensionError, MetricError
from transforseg.core.metrics import (
    HISTOGRAM_BINS,
    SegmentationMetrics,
    error_histogram,
    regression_metrics,
    segmentation_metrics,
)


def test_two_by_two_confusion_oracle():
    pred = np.array([[1.0, 0.0], [0.0, 0.0]])
    target = np.array([[1, 1], [0, 0]])
    m = segmentation_metrics(pred, target)
    assert m.acc == pytest.approx(0.75)
    assert m.iou == pytest.approx((2 / 3, 1 / 2))
    assert m.dice == pytest.approx((4 / 5, 2 / 3))
    assert m.miou == pytest.approx(7 / 12)
    assert m.mdice == pytest.approx((4 / 5 + 2 / 3) / 2)
    assert m.mdice == pytest.approx(0.7333, abs=1e-4)


def test_disjoint_single_pixels():
    pred = np.zeros((100, 100))
    target = np.zeros((100, 100))
    pred[0, 0] = 1.0
    target[99, 99] = 1.0
    m = segmentation_metrics(pred, target)
    assert m.iou[1] == 0.0 and m.dice[1] == 0.0
    assert m.iou[0] == pytest.approx(9998 / 10000)
    assert m.dice[0] == pytest.approx(2 * 9998 / 19998)
    assert m.mdice >= m.miou


def test_perfect_and_vacuous_masks_score_one():
    mask = np.zeros((8, 8))
    mask[2:5, 3] = 1.0
    perfect = segmentation_metrics(mask, mask)
    assert (perfect.acc, perfect.miou, perfect.mdice) == (1.0, 1.0, 1.0)
    empty = segmentation_metrics(np.zeros((4, 4)), np.zeros((4, 4)))
    assert empty.iou == (1.0, 1.0)


def test_threshold_binarizes_probabilities():
    probs = np.array([[0.49, 0.5], [0.51, 0.1]])
    target = np.array([[0, 1], [1, 0]])
    assert segmentation_metrics(probs, target).acc == 1.0
    assert segmentation_metrics(probs, target, threshold=0.6).acc == 0.5


def test_batch_metrics_average_per_image_scores():
    rng = np.random.default_rng(0)
    preds = rng.random((4, 6, 6))
    targets = (rng.random((4, 6, 6)) > 0.7).astype(np.uint8)
    batch = segmentation_metrics(preds, targets)
    singles = [segmentation_metrics(p, t) for p, t in zip(preds, targets, strict=True)]
    assert batch.miou == pytest.approx(np.mean([s.miou for s in singles]))
    assert batch == SegmentationMetrics.average(singles)
    json.dumps(batch.to_dict())


def test_segmentation_shape_errors():
    with pytest.raises(DimensionError):
        segmentation_metrics(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(DimensionError):
        segmentation_metrics(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 4)))
    with pytest.raises(MetricError):
        SegmentationMetrics.average([])


def test_regression_perfect_and_mean_predictor():
    rng = np.random.default_rng(1)
    targets = rng.normal(size=(20, 3))
    perfect = regression_metrics(targets, targets)
    assert (perfect.mse, perfect.mae, perfect.r2) == (0.0, 0.0, 1.0)
    mean = regression_metrics(np.broadcast_to(targets.mean(axis=0), targets.shape), targets)
    assert mean.r2 == pytest.approx(0.0, abs=1e-12)


def test_regression_matches_direct_summation():
    rng = np.random.default_rng(2)
    preds, targets = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    m = regression_metrics(preds, targets)
    err = preds - targets
    assert m.mse == pytest.approx(np.sum(err**2) / 15, abs=1e-12)
    assert m.mae == pytest.approx(np.sum(np.abs(err)) / 15, abs=1e-12)
    assert m.rmse**2 == pytest.approx(m.mse, abs=1e-12)
    r2 = []
    for axis in range(3):
        y = targets[:, axis]
        r2.append(1 - np.sum(err[:, axis] ** 2) / np.sum((y - y.mean()) ** 2))
    assert m.r2_per_axis == pytest.approx(tuple(r2))
    assert m.r2 == pytest.approx(np.mean(r2))


def test_regression_undefined_cases():
    with pytest.raises(MetricError):
        regression_metrics(np.zeros((1, 3)), np.ones((1, 3)))
    targets = np.ones((4, 3))
    targets[:, 0] = [1, 2, 3, 4]
    with pytest.raises(MetricError, match="y"):
        regression_metrics(np.zeros((4, 3)), targets)
    with pytest.raises(DimensionError):
        regression_metrics(np.zeros((4, 3)), np.zeros((4, 2)))


def test_error_histogram_counts_every_sample():
    rng = np.random.default_rng(3)
    targets = rng.uniform(-0.05, 0.05, size=(50, 3))
    preds = targets + rng.normal(0, 0.01, size=(50, 3))
    preds[0, 0] += 1.0
    hist = error_histogram(preds, targets, limit=0.05)
    assert len(hist.edges) == HISTOGRAM_BINS + 1
    assert hist.edges[0] == -0.05 and hist.edges[-1] == 0.05
    for axis in "xyz":
        assert sum(hist.counts[axis]) == 50
    assert hist.counts["x"][-1] >= 1


def test_error_histogram_needs_positive_limit():
    with pytest.raises(MetricError):
        error_histogram(np.zeros(3), np.zeros(3), limit=0.0)


def _confusion_oracle(pred, target, threshold=0.5):
    tp = fp = fn = tn = 0
    for p, t in zip(pred.ravel(), target.ravel(), strict=True):
        hit, truth = p >= threshold, t > 0.5
        tp += hit and truth
        fp += hit and not truth
        fn += truth and not hit
        tn += not hit and not truth

    def ratio(num, den):
        return 1.0 if den == 0 else num / den

    iou = (ratio(tn, tn + fp + fn), ratio(tp, tp + fp + fn))
    dice = (ratio(2 * tn, 2 * tn + fp + fn), ratio(2 * tp, 2 * tp + fp + fn))
    return (tp + tn) / pred.size, iou, dice


@pytest.mark.parametrize("seed", range(100))
def test_randomized_cases_match_brute_force_oracles(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 7, size=2))
    pred = rng.random(shape)
    target = (rng.random(shape) < rng.uniform(0.0, 0.6)).astype(float)
    m = segmentation_metrics(pred, target)
    acc, iou, dice = _confusion_oracle(pred, target)
    assert m.acc == pytest.approx(acc, abs=1e-9)
    assert m.iou == pytest.approx(iou, abs=1e-9)
    assert m.dice == pytest.approx(dice, abs=1e-9)
    assert m.miou == pytest.approx(sum(iou) / 2, abs=1e-9)
    assert m.mdice == pytest.approx(sum(dice) / 2, abs=1e-9)
    assert m.mdice >= m.miou - 1e-12

    n = int(rng.integers(2, 9))
    preds, targets = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    r = regression_metrics(preds, targets)
    err = preds - targets
    assert r.mse == pytest.approx(float(np.sum(err**2)) / (3 * n), abs=1e-9)
    assert r.mae == pytest.approx(float(np.sum(np.abs(err))) / (3 * n), abs=1e-9)
    assert r.rmse**2 == pytest.approx(r.mse, abs=1e-9)
    per_axis = [
        1.0 - np.sum(err[:, a] ** 2) / np.sum((targets[:, a] - targets[:, a].mean()) ** 2)
        for a in range(3)
    ]
    assert r.r2 == pytest.approx(float(np.mean(per_axis)), abs=1e-9)
