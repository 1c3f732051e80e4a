"""Binary PGM (P5, maxval 255) image and mask files."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from ..core.errors import ContractError, DatasetIOError


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize a ``[0, 1]`` float image (or a boolean mask) to 8 bits."""
    if image.dtype == np.bool_:
        return image.astype(np.uint8) * 255
    if image.ndim != 2:
        raise ContractError(f"PGM images are 2-d, got shape {image.shape}")
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(np.asarray(image))).save(path, format="PPM")


def read_pgm_uint8(path: str | os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise DatasetIOError(f"{path} is not a grayscale PGM (mode {img.mode})")
            return np.asarray(img, dtype=np.uint8).copy()
    except OSError as e:
        if isinstance(e, DatasetIOError):
            raise
        raise DatasetIOError(f"cannot read {path}: {e}") from e


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Grayscale image as float32 in ``[0, 1]``."""
    return read_pgm_uint8(path).astype(np.float32) / 255.0


def read_mask(path: str | os.PathLike) -> np.ndarray:
    return read_pgm_uint8(path) > 127
