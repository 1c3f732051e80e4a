"""Layer norm, multi-head attention, feed-forward and the composed transformer block.

Token sequences are ``[..., S, k]``; leading axes are batch axes. The same
block composition serves self-attention (encoder/decoder trunk) and
cross-attention (fusion), where queries come from one sequence and keys and
values from the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

from ..core import ops
from ..core.errors import ConfigError, DimensionError
from ..core.tensor import Tensor
from .params import ParameterTable, ParamSpec, require

NormStyle = Literal["pre", "post"]


@dataclass(frozen=True)
class LayerNormParams:
    gamma: Tensor
    beta: Tensor
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.gamma.ndim != 1 or self.gamma.shape != self.beta.shape:
            raise ConfigError(
                f"layer norm gamma {self.gamma.shape} / beta {self.beta.shape} must be equal vectors"
            )
        if self.epsilon <= 0:
            raise ConfigError(f"layer norm epsilon must be positive, got {self.epsilon}")

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    @staticmethod
    def ledger(prefix: str, dim: int) -> list[ParamSpec]:
        return [
            ParamSpec(f"{prefix}.gamma", (dim,), "ones"),
            ParamSpec(f"{prefix}.beta", (dim,), "zeros"),
        ]

    @classmethod
    def from_table(cls, table: ParameterTable, prefix: str, epsilon: float = 1e-6) -> LayerNormParams:
        return cls(require(table, f"{prefix}.gamma"), require(table, f"{prefix}.beta"), epsilon)


@dataclass(frozen=True)
class AttentionParams:
    """Fused per-head projections: column block h of ``w_q`` is head h's W_q."""

    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    heads: int

    def __post_init__(self) -> None:
        k = self.w_q.shape[0]
        if self.heads < 1 or k % self.heads:
            raise ConfigError(f"embedding dim {k} is not divisible by {self.heads} heads")
        for name in ("w_q", "w_k", "w_v", "w_o"):
            if getattr(self, name).shape != (k, k):
                raise ConfigError(f"attention {name} must be {k}x{k}")

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @staticmethod
    def ledger(prefix: str, dim: int) -> list[ParamSpec]:
        specs = []
        for proj in ("q", "k", "v", "o"):
            specs.append(ParamSpec(f"{prefix}.w_{proj}", (dim, dim)))
            specs.append(ParamSpec(f"{prefix}.b_{proj}", (dim,), "zeros"))
        return specs

    @classmethod
    def from_table(cls, table: ParameterTable, prefix: str, heads: int) -> AttentionParams:
        fields = {
            f"{kind}_{proj}": require(table, f"{prefix}.{kind}_{proj}")
            for proj in ("q", "k", "v", "o")
            for kind in ("w", "b")
        }
        return cls(heads=heads, **fields)


@dataclass(frozen=True)
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __post_init__(self) -> None:
        k, hidden = self.w1.shape
        if self.w2.shape != (hidden, k) or self.b1.shape != (hidden,) or self.b2.shape != (k,):
            raise ConfigError(f"ffn shapes inconsistent with {k}->{hidden}->{k}")

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @staticmethod
    def ledger(prefix: str, dim: int, hidden: int) -> list[ParamSpec]:
        return [
            ParamSpec(f"{prefix}.w1", (dim, hidden)),
            ParamSpec(f"{prefix}.b1", (hidden,), "zeros"),
            ParamSpec(f"{prefix}.w2", (hidden, dim)),
            ParamSpec(f"{prefix}.b2", (dim,), "zeros"),
        ]

    @classmethod
    def from_table(cls, table: ParameterTable, prefix: str) -> FfnParams:
        return cls(*(require(table, f"{prefix}.{n}") for n in ("w1", "b1", "w2", "b2")))


@dataclass(frozen=True)
class BlockParams:
    ln1: LayerNormParams
    attn: AttentionParams
    ln2: LayerNormParams
    ffn: FfnParams
    norm_style: NormStyle = "pre"

    def __post_init__(self) -> None:
        dims = {self.ln1.dim, self.attn.dim, self.ln2.dim, self.ffn.w1.shape[0]}
        if len(dims) != 1:
            raise ConfigError(f"block sub-parameters disagree on embedding dim: {sorted(dims)}")
        if self.norm_style not in ("pre", "post"):
            raise ConfigError(f"unknown norm style {self.norm_style!r}")

    @property
    def dim(self) -> int:
        return self.attn.dim

    @staticmethod
    def ledger(prefix: str, dim: int, hidden: int) -> list[ParamSpec]:
        return [
            *LayerNormParams.ledger(f"{prefix}.ln1", dim),
            *AttentionParams.ledger(f"{prefix}.attn", dim),
            *LayerNormParams.ledger(f"{prefix}.ln2", dim),
            *FfnParams.ledger(f"{prefix}.ffn", dim, hidden),
        ]

    @classmethod
    def from_table(
        cls,
        table: ParameterTable,
        prefix: str,
        heads: int,
        epsilon: float = 1e-6,
        norm_style: NormStyle = "pre",
    ) -> BlockParams:
        return cls(
            ln1=LayerNormParams.from_table(table, f"{prefix}.ln1", epsilon),
            attn=AttentionParams.from_table(table, f"{prefix}.attn", heads),
            ln2=LayerNormParams.from_table(table, f"{prefix}.ln2", epsilon),
            ffn=FfnParams.from_table(table, f"{prefix}.ffn"),
            norm_style=norm_style,
        )


def layer_norm(x: Tensor, p: LayerNormParams) -> Tensor:
    """Per-token normalization over the embedding axis, then ``gamma * x_hat + beta``."""
    if x.shape[-1] != p.dim:
        raise DimensionError(f"layer_norm: token dim {x.shape[-1]} != params dim {p.dim}")
    mu = ops.mean(x, axis=-1, keepdims=True)
    var = ops.variance(x, axis=-1, keepdims=True)
    eps = ops.constant(p.epsilon, dtype=x.dtype)
    x_hat = ops.div(ops.sub(x, mu), ops.sqrt(ops.add(var, eps)))
    return ops.add(ops.mul(x_hat, p.gamma), p.beta)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, seq, dim = x.shape
    n = len(lead)
    x = ops.reshape(x, (*lead, seq, heads, dim // heads))
    return ops.transpose(x, (*range(n), n + 1, n, n + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, heads, seq, head_dim = x.shape
    n = len(lead)
    x = ops.transpose(x, (*range(n), n + 1, n, n + 2))
    return ops.reshape(x, (*lead, seq, heads * head_dim))


def attention(query_src: Tensor, kv_src: Tensor, p: AttentionParams) -> tuple[Tensor, Tensor]:
    """Multi-head attention sub-layer.

    Returns the output projection ``A @ W_o + b_o`` of the concatenated heads and
    the attention maps ``[..., H, S_q, S_kv]``. Residual and normalization belong
    to the enclosing block. Self-attention is ``query_src is kv_src``.
    """
    k = p.dim
    if query_src.shape[-1] != k or kv_src.shape[-1] != k:
        raise DimensionError(
            f"attention: query {query_src.shape} / key-value {kv_src.shape} must end in {k}"
        )
    if query_src.shape[:-2] != kv_src.shape[:-2]:
        raise DimensionError(
            f"attention: batch dims of {query_src.shape} and {kv_src.shape} differ"
        )
    q = _split_heads(ops.linear(query_src, p.w_q, p.b_q), p.heads)
    key = _split_heads(ops.linear(kv_src, p.w_k, p.b_k), p.heads)
    v = _split_heads(ops.linear(kv_src, p.w_v, p.b_v), p.heads)
    n = key.ndim
    scores = ops.matmul(q, ops.transpose(key, (*range(n - 2), n - 1, n - 2)))
    maps = ops.softmax(ops.scale(scores, 1.0 / math.sqrt(p.head_dim)), axis=-1)
    heads_out = _merge_heads(ops.matmul(maps, v))
    return ops.linear(heads_out, p.w_o, p.b_o), maps


def ffn(x: Tensor, p: FfnParams) -> Tensor:
    if x.shape[-1] != p.w1.shape[0]:
        raise DimensionError(f"ffn: token dim {x.shape[-1]} != {p.w1.shape[0]}")
    return ops.linear(ops.gelu(ops.linear(x, p.w1, p.b1)), p.w2, p.b2)


def block_with_maps(query_tokens: Tensor, kv_tokens: Tensor, p: BlockParams) -> tuple[Tensor, Tensor]:
    """One transformer block; returns the block output and its attention maps."""
    self_attention = query_tokens is kv_tokens
    if p.norm_style == "pre":
        q_in = layer_norm(query_tokens, p.ln1)
        kv_in = q_in if self_attention else layer_norm(kv_tokens, p.ln1)
        attended, maps = attention(q_in, kv_in, p.attn)
        y = ops.add(query_tokens, attended)
        return ops.add(y, ffn(layer_norm(y, p.ln2), p.ffn)), maps
    attended, maps = attention(query_tokens, kv_tokens, p.attn)
    y = layer_norm(ops.add(query_tokens, attended), p.ln1)
    return layer_norm(ops.add(y, ffn(y, p.ffn)), p.ln2), maps


def transformer_block(x: Tensor, p: BlockParams) -> Tensor:
    return block_with_maps(x, x, p)[0]


def fusion_block(decoder_tokens: Tensor, encoder_tokens: Tensor, p: BlockParams) -> Tensor:
    """Cross-attention block: queries from the decoder, keys/values from the encoder."""
    return fusion_block_with_maps(decoder_tokens, encoder_tokens, p)[0]


def fusion_block_with_maps(
    decoder_tokens: Tensor, encoder_tokens: Tensor, p: BlockParams
) -> tuple[Tensor, Tensor]:
    if decoder_tokens.shape != encoder_tokens.shape:
        raise DimensionError(
            f"fusion_block: decoder {decoder_tokens.shape} and encoder "
            f"{encoder_tokens.shape} token sequences differ"
        )
    return block_with_maps(decoder_tokens, encoder_tokens, p)
