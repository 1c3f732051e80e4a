"""TransForSeg: weight-shared stereo ViT with a cross-attention fusion block,
one shared segmentation upsampler and a force regression head.

TransForcer is the same model built with ``with_segmentation_heads=False``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from ..core import ops
from ..core.errors import ConfigError, DimensionError
from ..core.tensor import Tensor
from .blocks import BlockParams, NormStyle, fusion_block_with_maps, transformer_block
from .params import ParameterTable, ParamSpec, initialize, ledger_count, require

logger = logging.getLogger(__name__)

SEG_KERNEL = 3
UPSAMPLE_KERNEL = 4
UPSAMPLE_STRIDE = 2
UPSAMPLE_PADDING = 1
FORCE_DIM = 3


@dataclass(frozen=True)
class ModelConfig:
    """Architectural hyperparameters; see `PRESETS` for the named variants."""

    image_size: int = 64
    channels: int = 1
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    heads: int = 2
    ffn_hidden: int = 256
    fusion_heads: int = 8
    fusion_ffn_hidden: int = 2048
    seg_base_channels: int = 96
    force_hidden: tuple[int, ...] = (64, 32)
    with_segmentation_heads: bool = True
    norm_style: NormStyle = "pre"
    layer_norm_eps: float = 1e-6
    variant: str = "custom"

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def token_count(self) -> int:
        return self.grid**2 + 1

    @property
    def upsample_blocks(self) -> int:
        return int(round(math.log2(self.patch_size)))

    def validate(self) -> ModelConfig:
        positive = ("image_size", "patch_size", "embed_dim", "heads", "ffn_hidden",
                    "fusion_heads", "fusion_ffn_hidden", "seg_base_channels")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.depth < 0:
            raise ConfigError(f"model.depth must be >= 0, got {self.depth}")
        if self.channels not in (1, 3):
            raise ConfigError(f"model.channels must be 1 or 3, got {self.channels}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} is not a multiple of patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.embed_dim % self.fusion_heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by fusion_heads {self.fusion_heads}"
            )
        if 2**self.upsample_blocks != self.patch_size:
            raise ConfigError(f"patch_size {self.patch_size} must be a power of two")
        if self.seg_base_channels % (2**self.upsample_blocks):
            raise ConfigError(
                f"seg_base_channels {self.seg_base_channels} cannot be halved "
                f"{self.upsample_blocks} times"
            )
        if not self.force_hidden or any(h < 1 for h in self.force_hidden):
            raise ConfigError(f"force_hidden must be positive sizes, got {self.force_hidden}")
        if self.norm_style not in ("pre", "post"):
            raise ConfigError(f"norm_style must be 'pre' or 'post', got {self.norm_style!r}")
        if self.layer_norm_eps <= 0:
            raise ConfigError("layer_norm_eps must be positive")
        return self

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> ModelConfig:
        try:
            base = PRESETS[name.lower()]
        except KeyError:
            raise ConfigError(f"unknown model variant {name!r}; choose from {sorted(PRESETS)}") from None
        return replace(base, **overrides).validate()

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["force_hidden"] = list(self.force_hidden)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        values = dict(data)
        if "force_hidden" in values:
            values["force_hidden"] = tuple(int(h) for h in values["force_hidden"])
        return cls(**values).validate()


PRESETS: dict[str, ModelConfig] = {
    "tiny": ModelConfig(
        image_size=224, patch_size=16, embed_dim=192, depth=12, heads=3, ffn_hidden=768,
        fusion_heads=8, fusion_ffn_hidden=2048, seg_base_channels=96, variant="tiny",
    ),
    "small": ModelConfig(
        image_size=224, patch_size=16, embed_dim=384, depth=12, heads=6, ffn_hidden=1536,
        fusion_heads=8, fusion_ffn_hidden=2048, seg_base_channels=96, variant="small",
    ),
    "desk": ModelConfig(
        image_size=64, patch_size=8, embed_dim=64, depth=4, heads=2, ffn_hidden=256,
        fusion_heads=4, fusion_ffn_hidden=256, seg_base_channels=32, variant="desk",
    ),
}
PRESETS["base"] = replace(PRESETS["small"], variant="base")


# ---------------------------------------------------------------- ledgers


def patch_ledger(config: ModelConfig) -> list[ParamSpec]:
    k, n = config.embed_dim, config.patch_size
    return [
        ParamSpec("patch.proj", (k, config.channels, n, n)),
        ParamSpec("patch.bias", (k,), "zeros"),
        ParamSpec("patch.cls", (k,), "zeros"),
        ParamSpec("patch.pos", (config.token_count, k), "zeros"),
    ]


def seg_head_ledger(config: ModelConfig) -> list[ParamSpec]:
    k, c = config.embed_dim, config.seg_base_channels
    specs = [
        ParamSpec("seg.reduce1.w", (c, k, SEG_KERNEL, SEG_KERNEL)),
        ParamSpec("seg.reduce1.b", (c,), "zeros"),
        ParamSpec("seg.reduce2.w", (c, c, SEG_KERNEL, SEG_KERNEL)),
        ParamSpec("seg.reduce2.b", (c,), "zeros"),
    ]
    for u in range(config.upsample_blocks):
        half = c // 2
        specs += [
            ParamSpec(f"seg.up{u}.conv.w", (half, c, SEG_KERNEL, SEG_KERNEL)),
            ParamSpec(f"seg.up{u}.conv.b", (half,), "zeros"),
            ParamSpec(f"seg.up{u}.tconv.w", (half, half, UPSAMPLE_KERNEL, UPSAMPLE_KERNEL)),
            ParamSpec(f"seg.up{u}.tconv.b", (half,), "zeros"),
        ]
        c = half
    specs += [
        ParamSpec("seg.out.w", (1, c, SEG_KERNEL, SEG_KERNEL)),
        ParamSpec("seg.out.b", (1,), "zeros"),
    ]
    return specs


def force_head_ledger(config: ModelConfig) -> list[ParamSpec]:
    sizes = [config.embed_dim, *config.force_hidden, FORCE_DIM]
    specs = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:], strict=True)):
        specs.append(ParamSpec(f"force.fc{i + 1}.w", (fan_in, fan_out)))
        specs.append(ParamSpec(f"force.fc{i + 1}.b", (fan_out,), "zeros"))
    return specs


def model_ledger(config: ModelConfig) -> list[ParamSpec]:
    """Every learnable tensor, once: the trunk and seg head are shared."""
    config.validate()
    specs = patch_ledger(config)
    for i in range(config.depth):
        specs += BlockParams.ledger(f"trunk.{i}", config.embed_dim, config.ffn_hidden)
    specs += BlockParams.ledger("fusion", config.embed_dim, config.fusion_ffn_hidden)
    if config.with_segmentation_heads:
        specs += seg_head_ledger(config)
    specs += force_head_ledger(config)
    return specs


def param_count(config: ModelConfig) -> int:
    return ledger_count(model_ledger(config))


def check_table(table: ParameterTable, ledger: list[ParamSpec]) -> None:
    expected = {spec.name: spec.shape for spec in ledger}
    missing = sorted(set(expected) - set(table))
    extra = sorted(set(table) - set(expected))
    if missing or extra:
        raise ConfigError(f"parameter table mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if table[name].shape != shape:
            raise DimensionError(f"parameter {name} has shape {table[name].shape}, expected {shape}")


# ---------------------------------------------------------------- parameter views


@dataclass(frozen=True)
class PatchEmbedParams:
    proj: Tensor
    bias: Tensor
    cls_token: Tensor
    positional: Tensor

    @classmethod
    def from_table(cls, table: ParameterTable) -> PatchEmbedParams:
        return cls(*(require(table, f"patch.{n}") for n in ("proj", "bias", "cls", "pos")))

    @property
    def patch_size(self) -> int:
        return self.proj.shape[-1]


@dataclass(frozen=True)
class SegHeadParams:
    reduce: list[tuple[Tensor, Tensor]]
    upsample: list[tuple[Tensor, Tensor, Tensor, Tensor]]
    out_w: Tensor
    out_b: Tensor

    @classmethod
    def from_table(cls, table: ParameterTable, blocks: int) -> SegHeadParams:
        reduce = [(require(table, f"seg.reduce{i}.w"), require(table, f"seg.reduce{i}.b")) for i in (1, 2)]
        upsample = [
            tuple(require(table, f"seg.up{u}.{part}") for part in ("conv.w", "conv.b", "tconv.w", "tconv.b"))
            for u in range(blocks)
        ]
        return cls(reduce, upsample, require(table, "seg.out.w"), require(table, "seg.out.b"))


@dataclass(frozen=True)
class ForceHeadParams:
    layers: list[tuple[Tensor, Tensor]]

    def __post_init__(self) -> None:
        if self.layers[-1][0].shape[-1] != FORCE_DIM:
            raise ConfigError(f"force head must end in {FORCE_DIM} units")

    @classmethod
    def from_table(cls, table: ParameterTable, depth: int) -> ForceHeadParams:
        return cls([(require(table, f"force.fc{i}.w"), require(table, f"force.fc{i}.b")) for i in range(1, depth + 1)])


# ---------------------------------------------------------------- forward pieces


def patchify_embed(images: Tensor, p: PatchEmbedParams) -> Tensor:
    """``[N, C, H, W]`` images -> ``[N, p*p + 1, k]`` tokens with [CLS] at slot 0."""
    n = p.patch_size
    emb = ops.conv2d(images, p.proj, p.bias, stride=n, padding=0)
    batch, k, gh, gw = emb.shape
    if gh * gw + 1 != p.positional.shape[0]:
        raise DimensionError(
            f"image {images.shape[-2:]} gives {gh * gw + 1} tokens, positional table has "
            f"{p.positional.shape[0]}"
        )
    patches = ops.transpose(ops.reshape(emb, (batch, k, gh * gw)), (0, 2, 1))
    cls = ops.broadcast_to(ops.reshape(p.cls_token, (1, 1, k)), (batch, 1, k))
    tokens = ops.concat([cls, patches], axis=1)
    return ops.add(tokens, p.positional)


def trunk_forward(tokens: Tensor, blocks: list[BlockParams]) -> Tensor:
    for block in blocks:
        tokens = transformer_block(tokens, block)
    return tokens


def seg_head_forward(tokens: Tensor, p: SegHeadParams, grid: int) -> Tensor:
    """Drop [CLS], fold tokens into a ``grid x grid`` map, upsample to ``[N, H, W]`` probabilities."""
    batch, seq, k = tokens.shape
    x = ops.transpose(ops.slice_axis(tokens, 1, 1, seq), (0, 2, 1))
    x = ops.reshape(x, (batch, k, grid, grid))
    for w, b in p.reduce:
        x = ops.relu(ops.conv2d(x, w, b, stride=1, padding=1))
    for conv_w, conv_b, tconv_w, tconv_b in p.upsample:
        x = ops.relu(ops.conv2d(x, conv_w, conv_b, stride=1, padding=1))
        x = ops.relu(
            ops.transposed_conv2d(
                x, tconv_w, tconv_b, stride=UPSAMPLE_STRIDE, padding=UPSAMPLE_PADDING,
                require_doubling=True,
            )
        )
    logits = ops.conv2d(x, p.out_w, p.out_b, stride=1, padding=1)
    _, _, height, width = logits.shape
    return ops.reshape(ops.sigmoid(logits), (batch, height, width))


def force_head_forward(cls_tokens: Tensor, p: ForceHeadParams) -> Tensor:
    x = cls_tokens
    for i, (w, b) in enumerate(p.layers):
        x = ops.linear(x, w, b)
        if i < len(p.layers) - 1:
            x = ops.gelu(x)
    return x


@dataclass
class ForwardOutput:
    seg_top: Tensor | None
    seg_side: Tensor | None
    force: Tensor
    diagnostics: dict[str, Any] = field(default_factory=dict)


class TransForSeg:
    """Stereo multitask ViT over a flat named parameter table."""

    def __init__(self, config: ModelConfig, params: ParameterTable):
        self.config = config.validate()
        check_table(params, model_ledger(config))
        self.params = params
        self.patch = PatchEmbedParams.from_table(params)
        self.trunk = [
            BlockParams.from_table(params, f"trunk.{i}", config.heads, config.layer_norm_eps, config.norm_style)
            for i in range(config.depth)
        ]
        self.fusion = BlockParams.from_table(
            params, "fusion", config.fusion_heads, config.layer_norm_eps, config.norm_style
        )
        self.seg_head = (
            SegHeadParams.from_table(params, config.upsample_blocks)
            if config.with_segmentation_heads
            else None
        )
        self.force_head = ForceHeadParams.from_table(params, len(config.force_hidden) + 1)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, dtype=None) -> TransForSeg:
        table = initialize(model_ledger(config), seed, dtype)
        logger.info(
            f"Built {config.variant} model ({'TransForSeg' if config.with_segmentation_heads else 'TransForcer'}) "
            f"with {param_count(config):,} parameters, seed {seed}"
        )
        return cls(config, table)

    @property
    def name(self) -> str:
        return "TransForSeg" if self.config.with_segmentation_heads else "TransForcer"

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def without_seg_heads(self) -> TransForSeg:
        """TransForcer sharing this model's trunk, fusion and force-head tensors."""
        config = replace(self.config, with_segmentation_heads=False)
        table = {name: t for name, t in self.params.items() if not name.startswith("seg.")}
        return TransForSeg(config, table)

    def _prepare(self, image: Any, role: str) -> tuple[Tensor, bool]:
        tensor = image if isinstance(image, Tensor) else Tensor(np.asarray(image))
        single = tensor.ndim in (2, 3)
        if tensor.ndim == 2:
            tensor = ops.reshape(tensor, (1, 1, *tensor.shape))
        elif tensor.ndim == 3:
            tensor = ops.reshape(tensor, (1, *tensor.shape))
        cfg = self.config
        expected = (cfg.channels, cfg.image_size, cfg.image_size)
        if tensor.ndim != 4 or tensor.shape[1:] != expected:
            raise DimensionError(f"{role} image has shape {image.shape}, model expects {expected}")
        return tensor, single

    def forward(self, top: Any, side: Any, return_attention: bool = False) -> ForwardOutput:
        """Both views through the shared trunk, fuse (Q from side), then the heads."""
        top_t, single = self._prepare(top, "top")
        side_t, _ = self._prepare(side, "side")
        if top_t.shape != side_t.shape:
            raise DimensionError(f"top {top_t.shape} and side {side_t.shape} batches differ")

        x_t = trunk_forward(patchify_embed(top_t, self.patch), self.trunk)
        x_s = trunk_forward(patchify_embed(side_t, self.patch), self.trunk)
        fused, maps = fusion_block_with_maps(x_s, x_t, self.fusion)

        batch, _, k = fused.shape
        cls_token = ops.reshape(ops.slice_axis(fused, 1, 0, 1), (batch, k))
        force = force_head_forward(cls_token, self.force_head)

        seg_top = seg_side = None
        if self.seg_head is not None:
            seg_top = seg_head_forward(x_t, self.seg_head, self.config.grid)
            seg_side = seg_head_forward(fused, self.seg_head, self.config.grid)

        if single:
            size = self.config.image_size
            force = ops.reshape(force, (FORCE_DIM,))
            if seg_top is not None and seg_side is not None:
                seg_top = ops.reshape(seg_top, (size, size))
                seg_side = ops.reshape(seg_side, (size, size))

        diagnostics: dict[str, Any] = {"tokens": x_t.shape[1], "model": self.name}
        if return_attention:
            diagnostics["fusion_attention"] = maps
        return ForwardOutput(seg_top, seg_side, force, diagnostics)

    __call__ = forward
