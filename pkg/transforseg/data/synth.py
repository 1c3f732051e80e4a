"""Deterministic stereo catheter scenes with exact masks and analytic force labels.

A sample is a pure function of ``(scene.seed, index)``: the force is drawn
from the sample's own generator, bent into a 3-d centerline by a cantilever
surrogate and rasterized into a top view (x, y) and a side view (z, y).
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from scipy import ndimage

from ..core.errors import ConfigError, DatasetIOError, GenerationError
from ..utils.timing import FindTime
from .dataset import MANIFEST_NAME, DatasetManifest, SampleRecord, split_of
from .pgm import write_pgm
from .scene import ForceVector, SceneConfig

logger = logging.getLogger(__name__)

View = Literal["top", "side"]

FOREGROUND = 0.85
PLAIN_BACKGROUND = 0.1
CLUTTER_MAX = 0.5
CLUTTER_BLOBS = 6
MIN_SAMPLES = 10


@dataclass
class StereoSample:
    image_top: np.ndarray
    image_side: np.ndarray
    mask_top: np.ndarray
    mask_side: np.ndarray
    force: ForceVector


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def sample_force(rng: np.random.Generator, force_range: float) -> ForceVector:
    """Independent uniform components on ``[-force_range, force_range]``."""
    if force_range < 0:
        raise ConfigError(f"force range must be >= 0, got {force_range}")
    if force_range == 0:
        return ForceVector(0.0, 0.0, 0.0)
    fx, fy, fz = rng.uniform(-force_range, force_range, size=3)
    return ForceVector(float(fx), float(fy), float(fz))


def cantilever_shape(s: np.ndarray) -> np.ndarray:
    """End-loaded beam profile normalized so that phi(0) = 0 and phi(1) = 1."""
    return (3.0 * s**2 - s**3) / 2.0


def deflect(force: ForceVector, scene: SceneConfig, samples: int) -> np.ndarray:
    """Centerline ``[samples, 3]`` of (x, y, z) in pixels relative to the base.

    y runs up the catheter; f_x and f_z bend it through the cantilever profile
    and f_y adds a half-sine bow split equally between x and z.
    """
    if samples < 2:
        raise ConfigError(f"deflect needs at least 2 samples, got {samples}")
    s = np.linspace(0.0, 1.0, samples)
    phi = cantilever_shape(s)
    bow = scene.axial_bow_gain * force.f_y * np.sin(np.pi * s) / 2.0
    x = scene.compliance * force.f_x * phi + bow
    z = scene.compliance * force.f_z * phi + bow
    return np.stack([x, s * scene.catheter_length, z], axis=1)


def _background(scene: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    size = scene.image_size
    if scene.background_mode == "plain":
        return np.full((size, size), PLAIN_BACKGROUND)
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.full((size, size), PLAIN_BACKGROUND)
    for _ in range(CLUTTER_BLOBS):
        cy, cx = rng.uniform(0, size, size=2)
        sigma = rng.uniform(size / 10, size / 4)
        amplitude = rng.uniform(0.1, 0.4)
        field += amplitude * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma**2))
    return np.clip(field, 0.0, CLUTTER_MAX)


def _stroke_mask(points: np.ndarray, radius: float, size: int) -> np.ndarray:
    """Pixels whose center lies within ``radius`` of the (row, col) polyline."""
    grid = np.stack(np.mgrid[0:size, 0:size], axis=-1).reshape(-1, 1, 2).astype(np.float64)
    start, end = points[:-1], points[1:]
    seg = end - start
    length2 = np.maximum((seg**2).sum(axis=1), 1e-12)
    t = np.clip(((grid - start) * seg).sum(axis=2) / length2, 0.0, 1.0)
    nearest = start + t[..., None] * seg
    dist2 = ((grid - nearest) ** 2).sum(axis=2).min(axis=1)
    return (dist2 <= radius**2).reshape(size, size)


def render_view(
    curve: np.ndarray,
    view: View,
    scene: SceneConfig,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize one projection of ``curve``; returns ``(image, mask)``.

    The mask is the exact stroke; the image composites it over the background
    and applies a 3x3 box blur.
    """
    if view not in ("top", "side"):
        raise ConfigError(f"view must be 'top' or 'side', got {view!r}")
    transverse = curve[:, 0] if view == "top" else curve[:, 2]
    base_col, base_row = scene.base
    points = np.stack([base_row - curve[:, 1], base_col + transverse], axis=1)

    r = scene.catheter_radius
    last = scene.image_size - 1
    if (points - r).min() < 0 or (points + r).max() > last:
        raise GenerationError(
            f"{view} view: catheter leaves the {scene.image_size}px frame "
            f"(rows {points[:, 0].min():.2f}..{points[:, 0].max():.2f}, "
            f"cols {points[:, 1].min():.2f}..{points[:, 1].max():.2f})"
        )

    mask = _stroke_mask(points, r, scene.image_size)
    background = _background(scene, rng if rng is not None else sample_rng(scene.seed, 0))
    image = np.where(mask, FOREGROUND, background)
    image = ndimage.uniform_filter(image, size=3, mode="nearest")
    return np.clip(image, 0.0, 1.0), mask


def render_masks(force: ForceVector, scene: SceneConfig) -> tuple[np.ndarray, np.ndarray]:
    curve = deflect(force, scene, scene.curve_samples)
    return render_view(curve, "top", scene)[1], render_view(curve, "side", scene)[1]


def generate_sample(index: int, scene: SceneConfig) -> StereoSample:
    rng = sample_rng(scene.seed, index)
    force = sample_force(rng, scene.force_range)
    curve = deflect(force, scene, scene.curve_samples)
    image_top, mask_top = render_view(curve, "top", scene, rng)
    image_side, mask_side = render_view(curve, "side", scene, rng)
    return StereoSample(image_top, image_side, mask_top, mask_side, force)


def sample_paths(index: int) -> dict[str, str]:
    return {
        "img_top": f"images/{index:06d}_top.pgm",
        "img_side": f"images/{index:06d}_side.pgm",
        "mask_top": f"masks/{index:06d}_top.pgm",
        "mask_side": f"masks/{index:06d}_side.pgm",
    }


def _write_sample(index: int, count: int, scene: SceneConfig, root: Path) -> SampleRecord:
    sample = generate_sample(index, scene)
    paths = sample_paths(index)
    try:
        write_pgm(root / paths["img_top"], sample.image_top)
        write_pgm(root / paths["img_side"], sample.image_side)
        write_pgm(root / paths["mask_top"], sample.mask_top)
        write_pgm(root / paths["mask_side"], sample.mask_side)
    except OSError as e:
        raise DatasetIOError(f"sample {index}: cannot write files under {root}: {e}") from e
    return SampleRecord(index=index, split=split_of(index, count), force=sample.force, **paths)


def generate_dataset(
    count: int,
    scene: SceneConfig,
    out_dir: str | os.PathLike,
    workers: int = 1,
) -> DatasetManifest:
    """Write ``count`` samples and their manifest under ``out_dir``.

    Samples are independent and may be rendered by ``workers`` threads; the
    manifest is written last, so a directory without one is incomplete.
    """
    scene.validate()
    if count < MIN_SAMPLES:
        raise ConfigError(f"dataset needs at least {MIN_SAMPLES} samples, got {count}")
    root = Path(out_dir)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
        (root / MANIFEST_NAME).unlink(missing_ok=True)
    except OSError as e:
        raise DatasetIOError(f"cannot prepare dataset directory {root}: {e}") from e

    logger.info(f"Generating {count} samples into {root} (seed {scene.seed}, {workers} worker(s))")
    with FindTime(f"generate {count} samples"):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(lambda i: _write_sample(i, count, scene, root), range(count)))
        else:
            records = [_write_sample(i, count, scene, root) for i in range(count)]

    manifest = DatasetManifest(root=root, records=records, seed=scene.seed, scene=scene)
    try:
        manifest.write()
    except OSError as e:
        raise DatasetIOError(f"cannot write manifest under {root}: {e}") from e
    logger.info(f"Dataset complete: {manifest.split_counts()}")
    return manifest
