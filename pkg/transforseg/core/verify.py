"""Fast invariant suite behind ``transforseg verify``.

Each check is a small function that raises :class:`VerificationError` on
failure and returns a one-line detail on success.
"""

from __future__ import annotations

import logging
import math
import tempfile
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import corruptions
from ..models import blocks
from ..models.checkpoint import TrainingMeta, decode_checkpoint, encode_checkpoint
from ..models.params import initialize
from ..models.vit import ModelConfig, TransForSeg, param_count
from ..utils.timing import FindTime
from . import ops
from .errors import CheckpointFormatError, TransForSegError
from .losses import force_loss, seg_loss
from .metrics import regression_metrics, segmentation_metrics
from .optim import OptimizerState, adam_step
from .tensor import Tensor, grad_check, precision

logger = logging.getLogger(__name__)

PARAM_TARGETS = {"tiny": 6.9e6, "small": 25.1e6}
PARAM_TOLERANCE = 0.05
GRAD_TOLERANCE = 1e-6
GRAD_SEEDS = 3


class VerificationError(TransForSegError):
    """An invariant check failed."""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise VerificationError(message)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_param_counts() -> str:
    parts = []
    for variant, target in PARAM_TARGETS.items():
        count = param_count(ModelConfig.preset(variant))
        _expect(
            abs(count - target) <= PARAM_TOLERANCE * target,
            f"{variant} has {count:,} parameters, target {target:,.0f} ± 5%",
        )
        parts.append(f"{variant} {count / 1e6:.2f}M")
    return ", ".join(parts)


def check_token_counts() -> str:
    vit = ModelConfig.preset("tiny").token_count
    desk = ModelConfig.preset("desk").token_count
    _expect(vit == 197, f"224/16 yields {vit} tokens, expected 197")
    _expect(desk == 65, f"64/8 yields {desk} tokens, expected 65")
    return "224/16 -> 197, 64/8 -> 65"


def check_attention_normalization() -> str:
    rng = np.random.default_rng(0)
    table = initialize(blocks.AttentionParams.ledger("attn", 16), seed=0)
    params = blocks.AttentionParams.from_table(table, "attn", heads=4)
    x = Tensor(rng.normal(size=(2, 9, 16)))
    _, maps = blocks.attention(x, x, params)
    row_sums = maps.data.sum(axis=-1)
    _expect(np.allclose(row_sums, 1.0, atol=1e-5), "attention rows do not sum to 1")
    probs = ops.softmax(Tensor(rng.normal(size=(5, 7)) * 30.0)).data.sum(axis=-1)
    _expect(np.allclose(probs, 1.0, atol=1e-5), "softmax rows do not sum to 1")
    return f"max row deviation {np.abs(row_sums - 1).max():.1e}"


def _tiny_block_params(seed: int, dim: int = 8, hidden: int = 16, heads: int = 2) -> blocks.BlockParams:
    table = initialize(blocks.BlockParams.ledger("b", dim, hidden), seed=seed)
    # 10x the init scale
    for tensor in table.values():
        if tensor.ndim == 2:
            tensor.assign(tensor.data * 10.0)
    return blocks.BlockParams.from_table(table, "b", heads)


def _gradient_cases(seed: int) -> dict[str, tuple[Callable[[Tensor], Tensor], Tensor]]:
    rng = np.random.default_rng(seed)
    p = _tiny_block_params(seed)
    x = Tensor(rng.normal(size=(2, 5, 8)))
    other = Tensor(rng.normal(size=(2, 5, 8)))
    image = Tensor(rng.normal(size=(1, 2, 5, 5)))
    kernel = Tensor(rng.normal(size=(3, 2, 3, 3)))
    tkernel = Tensor(rng.normal(size=(2, 3, 4, 4)))
    target = Tensor(rng.normal(size=(4, 3)))
    mask = Tensor((rng.random((3, 4)) > 0.5).astype(np.float64))
    weight = Tensor(rng.normal(size=(2, 5, 8)))

    def weighted(t: Tensor) -> Tensor:
        return ops.reduce_sum(ops.mul(t, weight))

    return {
        "layer_norm": (lambda t: weighted(blocks.layer_norm(t, p.ln1)), x),
        "self_attention": (lambda t: weighted(blocks.attention(t, t, p.attn)[0]), x),
        "cross_attention": (lambda t: weighted(blocks.attention(t, other, p.attn)[0]), x),
        "ffn": (lambda t: weighted(blocks.ffn(t, p.ffn)), x),
        "block": (lambda t: weighted(blocks.transformer_block(t, p)), x),
        "fusion_block": (lambda t: weighted(blocks.fusion_block(other, t, p)), x),
        "conv2d": (lambda t: ops.reduce_sum(ops.conv2d(t, kernel, padding=1)), image),
        "transposed_conv2d": (
            lambda t: ops.reduce_sum(ops.transposed_conv2d(t, tkernel, require_doubling=True)),
            image,
        ),
        "force_loss": (lambda t: force_loss(t, target), Tensor(rng.normal(size=(4, 3)))),
        "seg_loss": (lambda t: seg_loss(t, mask), Tensor(rng.uniform(0.05, 0.95, size=(3, 4)))),
    }


def check_gradients() -> str:
    worst: dict[str, float] = {}
    with precision(np.float64):
        for seed in range(GRAD_SEEDS):
            for name, (fn, x) in _gradient_cases(seed).items():
                worst[name] = max(worst.get(name, 0.0), grad_check(fn, x))
    failing = {k: v for k, v in worst.items() if v >= GRAD_TOLERANCE}
    _expect(not failing, f"gradient errors above {GRAD_TOLERANCE}: {failing}")
    return f"{len(worst)} kinds x {GRAD_SEEDS} seeds, worst {max(worst.values()):.1e}"


def check_model_gradient() -> str:
    config = ModelConfig(
        image_size=8, patch_size=4, embed_dim=8, depth=1, heads=2, ffn_hidden=16,
        fusion_heads=2, fusion_ffn_hidden=16, seg_base_channels=8, force_hidden=(8,),
    )
    with precision(np.float64):
        model = TransForSeg.init(config, seed=0, dtype=np.float64)
        rng = np.random.default_rng(1)
        side = Tensor(rng.random((1, 1, 8, 8)))
        mask = Tensor((rng.random((1, 8, 8)) > 0.7).astype(np.float64))

        def loss(top: Tensor) -> Tensor:
            out = model(top, side)
            l_seg = ops.add(seg_loss(out.seg_top, mask), seg_loss(out.seg_side, mask))
            return ops.add(ops.scale(ops.reduce_sum(out.force), 10.0), l_seg)

        error = grad_check(loss, Tensor(rng.random((1, 1, 8, 8))))
    _expect(error < GRAD_TOLERANCE, f"full model input gradient error {error:.2e}")
    return f"worst {error:.1e}"


def check_corruptions() -> str:
    rng = np.random.default_rng(0)
    image = rng.uniform(0.2, 0.8, size=(256, 256))
    impulse = corruptions.corrupt(image, corruptions.NoiseSpec.of("impulse", seed=1))
    changed = impulse != image
    fraction = changed.mean()
    _expect(abs(fraction - 0.20) <= 0.01, f"impulse corrupted fraction {fraction:.4f}")
    _expect(np.isin(impulse[changed], (0.0, 1.0)).all(), "impulse values outside {0, 1}")

    noisy = corruptions.corrupt(image, corruptions.NoiseSpec.of("gaussian", seed=2))
    std = float((noisy - image).std())
    _expect(abs(std - 0.02) <= 0.002, f"gaussian residual std {std:.4f}")
    for kind, params in (("gaussian", {"sigma": 0.0}), ("stripe", {"alpha": 0.0})):
        out = corruptions.corrupt(image, corruptions.NoiseSpec.of(kind, **params))
        _expect(np.array_equal(out, image), f"{kind} identity parameters changed the image")

    for kernel in (corruptions.motion_kernel(6, 20.0), corruptions.gaussian_kernel(10, 2.0)):
        _expect(abs(kernel.sum() - 1.0) <= 1e-6, f"blur kernel sums to {kernel.sum()}")
    flat = corruptions.corrupt(np.full((256, 256), 0.5), corruptions.NoiseSpec.of("poisson", seed=3))
    _expect(abs(flat.mean() - 0.5) <= 0.01, f"poisson mean {flat.mean():.4f}")
    return f"impulse {fraction:.4f}, gaussian std {std:.4f}, poisson mean {flat.mean():.4f}"


def check_metric_oracles() -> str:
    pred = np.array([[1, 0], [0, 0]], dtype=float)
    target = np.array([[1, 1], [0, 0]], dtype=float)
    seg = segmentation_metrics(pred, target)
    _expect(math.isclose(seg.miou, 7 / 12, abs_tol=1e-12), f"2x2 mIoU {seg.miou}")
    _expect(math.isclose(seg.mdice, (2 / 3 + 4 / 5) / 2, abs_tol=1e-12), f"2x2 mDice {seg.mdice}")

    value = force_loss(Tensor([[0.1, 0.2, 0.3]], dtype=np.float64), Tensor(np.zeros((1, 3)), dtype=np.float64))
    _expect(math.isclose(value.item(), 0.14 / 3, abs_tol=1e-12), f"force loss {value.item()}")

    targets = np.random.default_rng(4).normal(size=(20, 3))
    reg = regression_metrics(np.broadcast_to(targets.mean(axis=0), targets.shape), targets)
    _expect(abs(reg.r2) < 1e-12, f"mean predictor R^2 {reg.r2}")
    _expect(math.isclose(reg.rmse**2, reg.mse, rel_tol=1e-9), "rmse^2 != mse")
    return "confusion, force loss and R^2 oracles match"


def check_adam() -> str:
    w = Tensor([1.0], dtype=np.float64)
    adam_step({"w": w}, {"w": np.array([1.0])}, OptimizerState(learning_rate=0.1))
    _expect(math.isclose(w.item(), 1.0 - 0.1 / (1.0 + 1e-8), abs_tol=1e-12), f"first Adam step {w.item()}")
    return f"w after one step {w.item():.6f}"


def check_checkpoint() -> str:
    config = ModelConfig.preset("desk", depth=1)
    model = TransForSeg.init(config, seed=0)
    blob = encode_checkpoint(model.params, config, TrainingMeta())
    restored = decode_checkpoint(blob)
    _expect(all(np.array_equal(restored.params[n].data, t.data) for n, t in model.params.items()),
            "decoded tensors differ")
    tampered = bytearray(blob)
    tampered[-10] ^= 0xFF  # inside the last payload
    try:
        decode_checkpoint(bytes(tampered))
    except CheckpointFormatError:
        pass
    else:
        raise VerificationError("tampered checkpoint was accepted")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "c.tfsg"
        path.write_bytes(blob)
        _expect(decode_checkpoint(path.read_bytes()).config == config, "config did not survive a file round trip")
    return f"{len(blob):,} bytes, CRC tamper detected"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("parameter counts", check_param_counts),
    ("token counts", check_token_counts),
    ("attention normalization", check_attention_normalization),
    ("block gradients", check_gradients),
    ("model gradient", check_model_gradient),
    ("corruption statistics", check_corruptions),
    ("metric oracles", check_metric_oracles),
    ("adam step", check_adam),
    ("checkpoint codec", check_checkpoint),
]


def run_checks() -> list[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            with FindTime(f"verify {name}"):
                detail = check()
            results.append(CheckResult(name, True, detail))
        except (TransForSegError, ArithmeticError, ValueError) as e:
            logger.error(f"Check '{name}' failed: {e}")
            results.append(CheckResult(name, False, str(e)))
    return results
