import numpy as np
import pytest

from transforseg.core.errors import ConfigError, DimensionError
from transforseg.core.tensor import Tensor, precision
from transforseg.models import blocks
from transforseg.models.params import initialize


def _block(seed=0, dim=8, hidden=16, heads=2, norm_style="pre"):
    table = initialize(blocks.BlockParams.ledger("b", dim, hidden), seed=seed)
    for tensor in table.values():
        if tensor.ndim == 2:
            tensor.assign(tensor.data * 20.0)
    return blocks.BlockParams.from_table(table, "b", heads, norm_style=norm_style)


def test_layer_norm_standardizes_each_token():
    rng = np.random.default_rng(0)
    with precision(np.float64):
        params = blocks.LayerNormParams(Tensor(np.ones(6)), Tensor(np.zeros(6)))
        out = blocks.layer_norm(Tensor(rng.normal(3.0, 5.0, size=(2, 4, 6))), params).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)


def test_attention_maps_are_row_stochastic():
    rng = np.random.default_rng(1)
    p = _block().attn
    q = Tensor(rng.normal(size=(3, 5, 8)))
    kv = Tensor(rng.normal(size=(3, 5, 8)))
    out, maps = blocks.attention(q, kv, p)
    assert out.shape == (3, 5, 8)
    assert maps.shape == (3, 2, 5, 5)
    np.testing.assert_allclose(maps.data.sum(axis=-1), 1.0, atol=1e-5)


def test_self_attention_block_is_permutation_equivariant():
    rng = np.random.default_rng(2)
    p = _block()
    x = rng.normal(size=(1, 6, 8))
    perm = rng.permutation(6)
    with precision(np.float64):
        p64 = _block()
        out = blocks.transformer_block(Tensor(x), p64).data
        permuted = blocks.transformer_block(Tensor(x[:, perm]), p64).data
    np.testing.assert_allclose(permuted, out[:, perm], atol=1e-10)
    assert p.dim == 8


def test_fusion_block_takes_queries_from_decoder():
    rng = np.random.default_rng(3)
    with precision(np.float64):
        p = _block()
        decoder = Tensor(rng.normal(size=(2, 4, 8)))
        encoder = Tensor(rng.normal(size=(2, 4, 8)))
        fused = blocks.fusion_block(decoder, encoder, p)
        swapped = blocks.fusion_block(encoder, decoder, p)
    assert fused.shape == (2, 4, 8)
    assert not np.allclose(fused.data, swapped.data)


def test_fusion_block_requires_matching_sequences():
    p = _block()
    with pytest.raises(DimensionError):
        blocks.fusion_block(Tensor(np.zeros((1, 4, 8))), Tensor(np.zeros((1, 5, 8))), p)


def test_post_norm_block_ends_normalized():
    rng = np.random.default_rng(4)
    with precision(np.float64):
        p = _block(norm_style="post")
        out = blocks.transformer_block(Tensor(rng.normal(size=(2, 3, 8))), p).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)


def test_heads_must_divide_embedding_dim():
    table = initialize(blocks.AttentionParams.ledger("a", 8), seed=0)
    with pytest.raises(ConfigError):
        blocks.AttentionParams.from_table(table, "a", heads=3)


def test_block_params_reject_unknown_norm_style():
    with pytest.raises(ConfigError):
        _block(norm_style="sandwich")


def test_block_with_zeroed_sublayer_outputs_is_identity():
    rng = np.random.default_rng(5)
    with precision(np.float64):
        table = initialize(blocks.BlockParams.ledger("b", 8, 16), seed=5)
        for name in ("b.attn.w_o", "b.attn.b_o", "b.ffn.w2", "b.ffn.b2"):
            table[name].assign(np.zeros(table[name].shape))
        p = blocks.BlockParams.from_table(table, "b", 2)
        x = Tensor(rng.normal(size=(2, 5, 8)))
        out = blocks.transformer_block(x, p)
    np.testing.assert_array_equal(out.data, x.data)


def test_cross_attention_on_equal_sequences_matches_self_attention():
    rng = np.random.default_rng(6)
    values = rng.normal(size=(2, 5, 8))
    with precision(np.float64):
        p = _block(seed=6)
        queries, keys = Tensor(values), Tensor(values.copy())
        cross, cross_maps = blocks.attention(queries, keys, p.attn)
        own, own_maps = blocks.attention(queries, queries, p.attn)
        fused = blocks.fusion_block(queries, keys, p)
        block = blocks.transformer_block(queries, p)
    np.testing.assert_allclose(cross.data, own.data, atol=1e-12)
    np.testing.assert_allclose(cross_maps.data, own_maps.data, atol=1e-12)
    np.testing.assert_allclose(fused.data, block.data, atol=1e-12)
