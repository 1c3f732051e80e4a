"""Finite-difference checks of the transformer blocks and the assembled model."""

import numpy as np
import pytest

from transforseg.core import ops
from transforseg.core.tensor import Tensor, grad_check, precision
from transforseg.models import blocks
from transforseg.models.params import initialize
from transforseg.models.vit import ModelConfig, TransForSeg

SEEDS = range(50)
FLOAT64_TOLERANCE = 1e-6
FLOAT32_TOLERANCE = 1e-3

BLOCK_KINDS = {
    "layer_norm": lambda t, p, other: blocks.layer_norm(t, p.ln1),
    "self_attention": lambda t, p, other: blocks.attention(t, t, p.attn)[0],
    "cross_attention_queries": lambda t, p, other: blocks.attention(t, other, p.attn)[0],
    "ffn": lambda t, p, other: blocks.ffn(t, p.ffn),
    "transformer_block": lambda t, p, other: blocks.transformer_block(t, p),
    "post_norm_block": lambda t, p, other: blocks.transformer_block(t, p),
    "fusion_block": lambda t, p, other: blocks.fusion_block(other, t, p),
}


def _block_pair(seed, dim=8, hidden=16, heads=2, norm_style="pre"):
    """The same block at float32 and float64; weights at 10x the init scale."""
    table = initialize(blocks.BlockParams.ledger("b", dim, hidden), seed=seed, dtype=np.float64)
    single = {
        name: Tensor(t.data * 10.0 if t.ndim == 2 else t.data, dtype=np.float32, name=name)
        for name, t in table.items()
    }
    double = {name: Tensor(t.data, dtype=np.float64, name=name) for name, t in single.items()}
    return (
        blocks.BlockParams.from_table(single, "b", heads, norm_style=norm_style),
        blocks.BlockParams.from_table(double, "b", heads, norm_style=norm_style),
    )


def _block_case(kind, seed):
    rng = np.random.default_rng(seed)
    norm_style = "post" if kind == "post_norm_block" else "pre"
    p32, p64 = _block_pair(seed, norm_style=norm_style)
    x = rng.normal(size=(2, 5, 8)).astype(np.float32)
    other = rng.normal(size=(2, 5, 8)).astype(np.float32)
    weight = rng.normal(size=(2, 5, 8)).astype(np.float32)

    def at(params, dtype):
        other_t = Tensor(other, dtype=dtype)
        weight_t = Tensor(weight, dtype=dtype)
        return lambda t: ops.reduce_sum(ops.mul(BLOCK_KINDS[kind](t, params, other_t), weight_t))

    return x, at(p32, np.float32), at(p64, np.float64)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("kind", sorted(BLOCK_KINDS))
def test_block_gradient_at_float64(kind, seed):
    x, _, fn64 = _block_case(kind, seed)
    with precision(np.float64):
        error = grad_check(fn64, Tensor(x, dtype=np.float64))
    assert error < FLOAT64_TOLERANCE, f"{kind} seed {seed}: {error:.3e}"


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("kind", sorted(BLOCK_KINDS))
def test_block_gradient_at_float32(kind, seed):
    x, fn32, fn64 = _block_case(kind, seed)
    error = grad_check(fn32, Tensor(x, dtype=np.float32), reference=fn64)
    assert error < FLOAT32_TOLERANCE, f"{kind} seed {seed}: {error:.3e}"


def test_single_head_attention_on_three_tokens_at_float32():
    rng = np.random.default_rng(11)
    p32, p64 = _block_pair(11, dim=4, hidden=8, heads=1)
    x = rng.normal(size=(1, 3, 4)).astype(np.float32)

    def head(params):
        return lambda t: ops.reduce_sum(ops.exp(blocks.attention(t, t, params.attn)[0]))

    assert grad_check(head(p32), Tensor(x), reference=head(p64)) < FLOAT32_TOLERANCE


# ---------------------------------------------------------------- whole model

GRAD_MODEL = ModelConfig(
    image_size=8,
    patch_size=4,
    embed_dim=8,
    depth=1,
    heads=2,
    ffn_hidden=16,
    fusion_heads=2,
    fusion_ffn_hidden=16,
    seg_base_channels=8,
    force_hidden=(8,),
    variant="grad",
)


def _model_table(seed):
    with precision(np.float64):
        model = TransForSeg.init(GRAD_MODEL, seed=seed, dtype=np.float64)
    return {
        name: Tensor(t.data * 5.0 if t.ndim >= 2 else t.data, dtype=np.float64, name=name)
        for name, t in model.params.items()
    }


def _with_param(table, name, readout):
    """Model output as a function of one named parameter."""

    def fn(t):
        return readout(TransForSeg(GRAD_MODEL, {**table, name: t}))

    return fn


def _views(seed):
    rng = np.random.default_rng(seed + 1000)
    return Tensor(rng.random((2, 1, 8, 8))), Tensor(rng.random((2, 1, 8, 8))), rng


@pytest.mark.parametrize("seed", SEEDS)
def test_model_force_gradient_through_shared_trunk(seed):
    with precision(np.float64):
        table = _model_table(seed)
        top, side, rng = _views(seed)
        weight = Tensor(rng.normal(size=(2, 3)))

        def force(model):
            return ops.reduce_sum(ops.mul(model(top, side).force, weight))

        name = "trunk.0.attn.w_q"
        error = grad_check(_with_param(table, name, force), table[name])
    assert error < FLOAT64_TOLERANCE, f"seed {seed}: {error:.3e}"


@pytest.mark.parametrize("seed", SEEDS)
def test_model_force_gradient_with_respect_to_top_view(seed):
    with precision(np.float64):
        model = TransForSeg(GRAD_MODEL, _model_table(seed))
        top, side, rng = _views(seed)
        weight = Tensor(rng.normal(size=(2, 3)))
        error = grad_check(lambda t: ops.reduce_sum(ops.mul(model(t, side).force, weight)), top)
    assert error < FLOAT64_TOLERANCE, f"seed {seed}: {error:.3e}"


@pytest.mark.parametrize("seed", SEEDS)
def test_model_segmentation_gradient_through_shared_head(seed):
    with precision(np.float64):
        table = _model_table(seed)
        top, side, rng = _views(seed)
        w_top = Tensor(rng.normal(size=(2, 8, 8)))
        w_side = Tensor(rng.normal(size=(2, 8, 8)))

        def masks(model):
            out = model(top, side)
            return ops.add(
                ops.reduce_sum(ops.mul(out.seg_top, w_top)),
                ops.reduce_sum(ops.mul(out.seg_side, w_side)),
            )

        error = grad_check(_with_param(table, "seg.out.w", masks), table["seg.out.w"])
    assert error < FLOAT64_TOLERANCE, f"seed {seed}: {error:.3e}"
