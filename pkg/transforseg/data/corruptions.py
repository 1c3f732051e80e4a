"""Seeded image corruptions for robustness evaluation.

Six kinds, each with one standard parameterization: impulse (salt and
pepper), additive Gaussian, intensity-dependent Poisson, linear motion blur,
isotropic defocus blur and additive stripes. Corruptions only ever touch
model inputs; masks and force labels stay clean.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from scipy import ndimage

from ..core.errors import ConfigError, ContractError

logger = logging.getLogger(__name__)

NoiseKind = Literal["impulse", "gaussian", "poisson", "motion", "defocus", "stripe"]

POISSON_LEVELS = 255.0

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "impulse": {"fraction": 0.20},
    "gaussian": {"mu": 0.0, "sigma": 0.02},
    "poisson": {},
    "motion": {"kernel": 6, "angle_deg": 20.0},
    "defocus": {"kernel": 10, "sigma": 2.0},
    "stripe": {"alpha": 0.1, "direction": "vertical", "count": 50, "max_width": 10},
}
KINDS: tuple[str, ...] = tuple(DEFAULT_PARAMS)


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown corruption kind {self.kind!r}; choose from {list(KINDS)}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind} takes no parameters {sorted(unknown)}")
        # fill defaults so equality and serialization see every parameter
        object.__setattr__(self, "params", {**DEFAULT_PARAMS[self.kind], **self.params})
        self.validate()

    @classmethod
    def of(cls, kind: str, seed: int = 0, **params: Any) -> NoiseSpec:
        return cls(kind, params, seed)  # type: ignore[arg-type]

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def validate(self) -> None:
        p = self.params
        if self.kind == "impulse" and not 0.0 <= p["fraction"] <= 1.0:
            raise ConfigError(f"impulse fraction must be in [0, 1], got {p['fraction']}")
        if self.kind in ("gaussian", "defocus") and p["sigma"] < 0:
            raise ConfigError(f"{self.kind} sigma must be >= 0, got {p['sigma']}")
        if self.kind in ("motion", "defocus") and int(p["kernel"]) < 1:
            raise ConfigError(f"{self.kind} kernel must be >= 1, got {p['kernel']}")
        if self.kind == "stripe":
            if int(p["count"]) < 0:
                raise ConfigError(f"stripe count must be >= 0, got {p['count']}")
            if int(p["max_width"]) < 1:
                raise ConfigError(f"stripe max_width must be >= 1, got {p['max_width']}")
            if p["direction"] not in ("vertical", "horizontal"):
                raise ConfigError(f"stripe direction must be vertical or horizontal, got {p['direction']!r}")

    @property
    def label(self) -> str:
        return self.kind

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NoiseSpec:
        try:
            return cls(data["kind"], dict(data.get("params", {})), int(data.get("seed", 0)))
        except KeyError as e:
            raise ConfigError(f"corruption spec is missing {e}") from None

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> NoiseSpec:
        """Parse ``kind`` / ``kind:key=value,...`` or a JSON object."""
        text = text.strip()
        if text.startswith("{"):
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as e:
                raise ConfigError(f"corruption spec is not valid JSON: {e}") from None
        kind, _, rest = text.partition(":")
        params: dict[str, Any] = {}
        for item in filter(None, rest.split(",")):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"corruption parameter {item!r} is not key=value")
            key = key.strip()
            if key == "seed":
                seed = int(value)
                continue
            params[key] = _coerce(value.strip())
        return cls(kind.strip(), params, seed)  # type: ignore[arg-type]


def _coerce(value: str) -> Any:
    for convert in (int, float):
        try:
            return convert(value)
        except ValueError:
            pass
    return value


def suite(seed: int = 0) -> list[NoiseSpec]:
    """The six corruptions at their standard parameters."""
    return [NoiseSpec(kind, {}, seed) for kind in KINDS]  # type: ignore[arg-type]


def motion_kernel(size: int, angle_deg: float) -> np.ndarray:
    """Normalized ``size x size`` kernel holding a line of length ``size`` through the center.

    The line is rasterized as a supercover: every cell it crosses is weighted
    by the length of line inside that cell.
    """
    if size < 1:
        raise ConfigError(f"kernel size must be >= 1, got {size}")
    center = (size - 1) / 2.0
    half = size / 2.0
    theta = math.radians(angle_deg)
    sin, cos = math.sin(theta), math.cos(theta)
    bounds = np.arange(size - 1) + 0.5
    crossings = [np.array([-half, half])]
    if abs(cos) > 1e-12:
        crossings.append((bounds - center) / cos)
    if abs(sin) > 1e-12:
        crossings.append((center - bounds) / sin)
    ts = np.unique(np.concatenate(crossings))
    ts = ts[(ts >= -half) & (ts <= half)]
    mids = (ts[:-1] + ts[1:]) / 2.0
    rows = np.clip(np.floor(center - mids * sin + 0.5).astype(int), 0, size - 1)
    cols = np.clip(np.floor(center + mids * cos + 0.5).astype(int), 0, size - 1)
    kernel = np.zeros((size, size))
    np.add.at(kernel, (rows, cols), np.diff(ts))
    return kernel / kernel.sum()


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    if size < 1:
        raise ConfigError(f"kernel size must be >= 1, got {size}")
    if sigma == 0:
        kernel = np.zeros((size, size))
        kernel[(size - 1) // 2, (size - 1) // 2] = 1.0
        return kernel
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _stripes(image: np.ndarray, p: dict[str, Any], rng: np.random.Generator) -> np.ndarray:
    out = image.copy()
    vertical = p["direction"] == "vertical"
    extent = image.shape[-1] if vertical else image.shape[-2]
    for _ in range(int(p["count"])):
        width = int(rng.integers(1, int(p["max_width"]) + 1))
        start = int(rng.integers(0, extent))
        polarity = 1.0 if rng.random() < 0.5 else -1.0
        band = slice(start, start + width)
        if vertical:
            out[..., :, band] += p["alpha"] * polarity
        else:
            out[..., band, :] += p["alpha"] * polarity
    return out


def corrupt(image: np.ndarray, spec: NoiseSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply ``spec`` to a 2-d ``[0, 1]`` image; output stays in ``[0, 1]``.

    ``rng`` defaults to a generator seeded with ``spec.seed``.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ContractError(f"corrupt expects a 2-d grayscale image, got shape {image.shape}")
    if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
        raise ContractError("corrupt expects image values in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    p = spec.params

    if spec.kind == "impulse":
        hit = rng.random(image.shape) < p["fraction"]
        salt = rng.random(image.shape) < 0.5
        out = image.copy()
        out[hit] = np.where(salt[hit], 1.0, 0.0)
        return out
    if spec.kind == "gaussian":
        if p["sigma"] == 0 and p["mu"] == 0:
            return image.copy()
        return np.clip(image + rng.normal(p["mu"], p["sigma"], image.shape), 0.0, 1.0)
    if spec.kind == "poisson":
        return np.clip(rng.poisson(image * POISSON_LEVELS) / POISSON_LEVELS, 0.0, 1.0)
    if spec.kind == "motion":
        kernel = motion_kernel(int(p["kernel"]), float(p["angle_deg"]))
        return np.clip(ndimage.convolve(image, kernel, mode="nearest"), 0.0, 1.0)
    if spec.kind == "defocus":
        kernel = gaussian_kernel(int(p["kernel"]), float(p["sigma"]))
        return np.clip(ndimage.convolve(image, kernel, mode="nearest"), 0.0, 1.0)
    return np.clip(_stripes(image, p, rng), 0.0, 1.0)


def corrupt_batch(images: np.ndarray, spec: NoiseSpec | None, stream: int = 0) -> np.ndarray:
    """Corrupt every ``[H, W]`` plane of ``images`` (``[N, C, H, W]``).

    Image ``i`` uses the generator ``(spec.seed, stream, i)``; channels of one
    image share the same corruption.
    """
    if spec is None:
        return images
    out = np.empty_like(images)
    for i in range(images.shape[0]):
        corrupted = corrupt(images[i, 0], spec, np.random.default_rng([spec.seed, stream, i]))
        out[i] = corrupted.astype(images.dtype)[None]
    return out
