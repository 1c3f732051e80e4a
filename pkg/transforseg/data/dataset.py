"""Dataset manifest and the in-memory split loader."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from ..core.errors import DatasetIOError, ManifestError
from ..utils.io import write_atomic
from .pgm import read_mask, read_pgm
from .scene import ForceVector, SceneConfig

logger = logging.getLogger(__name__)

Split = Literal["train", "val", "test"]
SPLITS: tuple[Split, ...] = ("train", "val", "test")
MANIFEST_NAME = "manifest.csv"
SCENE_NAME = "scene.json"
MANIFEST_HEADER = ["index", "split", "img_top", "img_side", "mask_top", "mask_side", "fx", "fy", "fz"]
MIN_HELD_OUT = 2


def split_sizes(count: int) -> dict[Split, int]:
    """80 / 10 / 10 partition; the remainder after ``train`` is shared evenly.

    ``val`` and ``test`` keep at least :data:`MIN_HELD_OUT` samples each.
    """
    train = max(0, min(count * 8 // 10, count - 2 * MIN_HELD_OUT))
    val = (count - train) // 2
    return {"train": train, "val": val, "test": count - train - val}


def split_of(index: int, count: int) -> Split:
    sizes = split_sizes(count)
    if index < sizes["train"]:
        return "train"
    if index < sizes["train"] + sizes["val"]:
        return "val"
    return "test"


@dataclass(frozen=True)
class SampleRecord:
    index: int
    split: Split
    img_top: str
    img_side: str
    mask_top: str
    mask_side: str
    force: ForceVector

    def row(self) -> list[str]:
        return [
            str(self.index), self.split, self.img_top, self.img_side, self.mask_top,
            self.mask_side, *(repr(float(v)) for v in self.force.as_tuple()),
        ]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> SampleRecord:
        split = row["split"]
        if split not in SPLITS:
            raise ManifestError(f"sample {row['index']}: unknown split {split!r}")
        return cls(
            index=int(row["index"]),
            split=split,  # type: ignore[arg-type]
            img_top=row["img_top"],
            img_side=row["img_side"],
            mask_top=row["mask_top"],
            mask_side=row["mask_side"],
            force=ForceVector(float(row["fx"]), float(row["fy"]), float(row["fz"])),
        )


@dataclass
class DatasetManifest:
    root: Path
    records: list[SampleRecord]
    seed: int
    scene: SceneConfig

    @property
    def dataset_id(self) -> str:
        return f"{self.root.name}:seed{self.seed}:n{len(self.records)}"

    def split_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in SPLITS}
        for record in self.records:
            counts[record.split] += 1
        return counts

    def records_for(self, split: Split) -> list[SampleRecord]:
        return [r for r in self.records if r.split == split]

    def write(self) -> Path:
        """Sidecar JSON first, then the CSV, which marks the dataset complete."""
        sidecar = {"seed": self.seed, "scene": self.scene.to_dict(), "count": len(self.records)}
        write_atomic(self.root / SCENE_NAME, json.dumps(sidecar, indent=2, sort_keys=True).encode())
        lines: list[list[str]] = [MANIFEST_HEADER, *(r.row() for r in self.records)]
        text = "".join(",".join(line) + "\n" for line in lines)
        return write_atomic(self.root / MANIFEST_NAME, text.encode("utf-8"))

    @classmethod
    def load(cls, root: str | os.PathLike) -> DatasetManifest:
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ManifestError(f"{root} has no {MANIFEST_NAME} (generation incomplete?)")
        try:
            sidecar = json.loads((root / SCENE_NAME).read_text(encoding="utf-8"))
            with open(manifest_path, newline="", encoding="utf-8") as f:
                reader = csv.DictReader(f)
                if reader.fieldnames != MANIFEST_HEADER:
                    raise ManifestError(f"{manifest_path} header {reader.fieldnames} != {MANIFEST_HEADER}")
                records = [SampleRecord.from_row(row) for row in reader]
        except OSError as e:
            raise DatasetIOError(f"cannot read dataset at {root}: {e}") from e
        except (KeyError, ValueError, json.JSONDecodeError) as e:
            if isinstance(e, ManifestError):
                raise
            raise ManifestError(f"malformed dataset at {root}: {e}") from e

        if [r.index for r in records] != list(range(len(records))):
            raise ManifestError(f"{manifest_path}: sample indices are not 0..{len(records) - 1}")
        try:
            manifest = cls(root, records, int(sidecar["seed"]), SceneConfig.from_dict(sidecar["scene"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{root / SCENE_NAME} is invalid: {e}") from e
        expected = split_sizes(len(records))
        if manifest.split_counts() != expected:
            raise ManifestError(f"split counts {manifest.split_counts()} != expected {expected}")
        logger.info(f"Loaded dataset {manifest.dataset_id} with splits {manifest.split_counts()}")
        return manifest


@dataclass
class SplitArrays:
    """One split held in memory: images ``[N, C, H, W]``, masks ``[N, H, W]``, forces ``[N, 3]``."""

    top: np.ndarray
    side: np.ndarray
    mask_top: np.ndarray
    mask_side: np.ndarray
    forces: np.ndarray
    indices: list[int]

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def image_size(self) -> int:
        return self.top.shape[-1]

    def take(self, rows: np.ndarray | list[int]) -> SplitArrays:
        rows = np.asarray(rows, dtype=np.intp)
        return SplitArrays(
            self.top[rows], self.side[rows], self.mask_top[rows], self.mask_side[rows],
            self.forces[rows], [self.indices[i] for i in rows],
        )

    def with_images(self, top: np.ndarray, side: np.ndarray) -> SplitArrays:
        return SplitArrays(top, side, self.mask_top, self.mask_side, self.forces, self.indices)


def load_split(manifest: DatasetManifest, split: Split, channels: int = 1) -> SplitArrays:
    """Read every sample of ``split``; grayscale is replicated when ``channels == 3``."""
    records = manifest.records_for(split)
    if not records:
        raise ManifestError(f"split {split!r} of {manifest.dataset_id} is empty")
    root = manifest.root

    def images(attr: str) -> np.ndarray:
        stack = np.stack([read_pgm(root / getattr(r, attr)) for r in records])[:, None]
        return np.repeat(stack, channels, axis=1) if channels > 1 else stack

    def masks(attr: str) -> np.ndarray:
        return np.stack([read_mask(root / getattr(r, attr)) for r in records]).astype(np.float32)

    arrays = SplitArrays(
        top=images("img_top"),
        side=images("img_side"),
        mask_top=masks("mask_top"),
        mask_side=masks("mask_side"),
        forces=np.array([r.force.as_tuple() for r in records], dtype=np.float64),
        indices=[r.index for r in records],
    )
    logger.debug(f"Loaded {len(arrays)} {split} samples from {root}")
    return arrays
