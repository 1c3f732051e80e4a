"""Scene geometry and the force label type shared by the generator and the loader."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Literal

import numpy as np

from ..core.errors import ConfigError

BackgroundMode = Literal["plain", "clutter"]


@dataclass(frozen=True)
class ForceVector:
    """Tip force in Newtons."""

    f_x: float
    f_y: float
    f_z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ConfigError(f"force components must be finite, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.f_x, self.f_y, self.f_z)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


@dataclass(frozen=True)
class SceneConfig:
    image_size: int = 64
    # (column, row) of the catheter base in pixels; None puts it bottom-center.
    catheter_base: tuple[float, float] | None = None
    catheter_length: float = 44.0
    catheter_radius: float = 1.5
    compliance: float = 200.0
    axial_bow_gain: float = 100.0
    background_mode: BackgroundMode = "plain"
    force_range: float = 0.05
    seed: int = 0
    curve_samples: int = 64

    @property
    def base(self) -> tuple[float, float]:
        if self.catheter_base is not None:
            return self.catheter_base
        return (self.image_size / 2.0, self.image_size - 6.0)

    @property
    def max_transverse(self) -> float:
        return (self.compliance + self.axial_bow_gain) * self.force_range

    def validate(self) -> SceneConfig:
        if self.image_size < 8:
            raise ConfigError(f"scene.image_size must be >= 8, got {self.image_size}")
        if self.catheter_radius < 1:
            raise ConfigError(f"scene.catheter_radius must be >= 1, got {self.catheter_radius}")
        if self.catheter_length <= 0:
            raise ConfigError(f"scene.catheter_length must be positive, got {self.catheter_length}")
        for name in ("compliance", "axial_bow_gain", "force_range"):
            if getattr(self, name) < 0:
                raise ConfigError(f"scene.{name} must be >= 0, got {getattr(self, name)}")
        if self.background_mode not in ("plain", "clutter"):
            raise ConfigError(f"scene.background_mode must be plain or clutter, got {self.background_mode!r}")
        if self.curve_samples < 2:
            raise ConfigError(f"scene.curve_samples must be >= 2, got {self.curve_samples}")
        if self.max_transverse >= self.image_size / 3:
            raise ConfigError(
                f"(compliance + axial_bow_gain) * force_range = {self.max_transverse:.3f} px "
                f"must stay below image_size / 3 = {self.image_size / 3:.3f}"
            )
        col, row = self.base
        r = self.catheter_radius
        last = self.image_size - 1
        if col - self.max_transverse - r < 0 or col + self.max_transverse + r > last:
            raise ConfigError(f"catheter base column {col} lets the catheter leave the frame")
        if row + r > last or row - self.catheter_length - r < 0:
            raise ConfigError(
                f"catheter of length {self.catheter_length} from row {row} does not fit "
                f"in a {self.image_size} px frame"
            )
        return self

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        if self.catheter_base is not None:
            data["catheter_base"] = list(self.catheter_base)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SceneConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        values = dict(data)
        if values.get("catheter_base") is not None:
            col, row = values["catheter_base"]
            values["catheter_base"] = (float(col), float(row))
        return cls(**values).validate()
