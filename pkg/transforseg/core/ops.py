"""Differentiable primitives over :class:`~transforseg.core.tensor.Tensor`.

Every op accepts optional leading batch dimensions where that makes sense
(matmul, the elementwise suite, the convolutions). Gradients are exact;
reductions run in numpy's fixed order, so a given input always produces the
same bits.

Convolutions follow the cross-correlation convention (no kernel flip).
``conv2d`` kernels are ``[C_out, C_in, kh, kw]``; ``transposed_conv2d``
kernels are ``[C_in, C_out, kh, kw]``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ConfigError, DimensionError
from .tensor import Context, Op, Tensor, default_dtype

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715
BCE_CLAMP = 1e-7


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def _normalize_axis(op: str, axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} is invalid for a {ndim}-d tensor")
    return axis % ndim


def _normalize_axes(op: str, axis: int | Sequence[int] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(_normalize_axis(op, a, ndim) for a in axis))


def _expand_reduced(grad: np.ndarray, axes: tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        for axis in axes:
            grad = np.expand_dims(grad, axis)
    return grad


# ---------------------------------------------------------------- elementwise


class Add(Op):
    name = "add"

    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape("add", a, b)
        ctx.shapes = (a.shape, b.shape)
        return a + b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        sa, sb = ctx.shapes
        return _unbroadcast(grad, sa), _unbroadcast(grad, sb)


class Sub(Op):
    name = "sub"

    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape("sub", a, b)
        ctx.shapes = (a.shape, b.shape)
        return a - b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        sa, sb = ctx.shapes
        return _unbroadcast(grad, sa), _unbroadcast(-grad, sb)


class Mul(Op):
    name = "mul"

    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape("mul", a, b)
        ctx.a, ctx.b = a, b
        return a * b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return _unbroadcast(grad * ctx.b, ctx.a.shape), _unbroadcast(grad * ctx.a, ctx.b.shape)


class Div(Op):
    name = "div"

    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape("div", a, b)
        ctx.a, ctx.b = a, b
        return a / b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.a, ctx.b
        return _unbroadcast(grad / b, a.shape), _unbroadcast(-grad * a / (b * b), b.shape)


class Scale(Op):
    name = "scale"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, factor: float) -> np.ndarray:
        ctx.factor = factor
        return x * np.asarray(factor, dtype=x.dtype)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * np.asarray(ctx.factor, dtype=grad.dtype),)


class Exp(Op):
    name = "exp"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.out = np.exp(x)
        return ctx.out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * ctx.out,)


class Log(Op):
    name = "log"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.x = x
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad / ctx.x,)


class Sqrt(Op):
    name = "sqrt"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            ctx.out = np.sqrt(x)
        return ctx.out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad * 0.5 / ctx.out,)


class Gelu(Op):
    """GELU, tanh approximation."""

    name = "gelu"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        inner = _GELU_C * (x + _GELU_K * x**3)
        t = np.tanh(inner)
        ctx.x, ctx.t = x, t
        return 0.5 * x * (1.0 + t)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        x, t = ctx.x, ctx.t
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        return (grad * local,)


class Sigmoid(Op):
    name = "sigmoid"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.out = expit(x)
        return ctx.out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        s = ctx.out
        return (grad * s * (1.0 - s),)


class Relu(Op):
    name = "relu"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.mask = x > 0
        return np.where(ctx.mask, x, np.zeros((), dtype=x.dtype))

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (np.where(ctx.mask, grad, np.zeros((), dtype=grad.dtype)),)


# ---------------------------------------------------------------- reductions


class Sum(Op):
    name = "sum"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axis=None, keepdims=False) -> np.ndarray:
        ctx.shape = x.shape
        ctx.axes = _normalize_axes("sum", axis, x.ndim)
        ctx.keepdims = keepdims
        return np.sum(x, axis=ctx.axes, keepdims=keepdims)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        grad = _expand_reduced(grad, ctx.axes, ctx.keepdims)
        return (np.broadcast_to(grad, ctx.shape).copy(),)


class Mean(Op):
    name = "mean"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axis=None, keepdims=False) -> np.ndarray:
        ctx.shape = x.shape
        ctx.axes = _normalize_axes("mean", axis, x.ndim)
        ctx.keepdims = keepdims
        ctx.count = int(np.prod([x.shape[a] for a in ctx.axes]))
        return np.mean(x, axis=ctx.axes, keepdims=keepdims)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        grad = _expand_reduced(grad, ctx.axes, ctx.keepdims) / ctx.count
        return (np.broadcast_to(grad, ctx.shape).astype(grad.dtype),)


class Variance(Op):
    """Population variance."""

    name = "variance"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axis=None, keepdims=False) -> np.ndarray:
        axes = _normalize_axes("variance", axis, x.ndim)
        centered = x - np.mean(x, axis=axes, keepdims=True)
        ctx.centered, ctx.axes, ctx.keepdims = centered, axes, keepdims
        ctx.count = int(np.prod([x.shape[a] for a in axes]))
        return np.mean(centered * centered, axis=axes, keepdims=keepdims)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        grad = _expand_reduced(grad, ctx.axes, ctx.keepdims)
        return (grad * ctx.centered * (2.0 / ctx.count),)


class Softmax(Op):
    name = "softmax"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axis: int) -> np.ndarray:
        axis = _normalize_axis("softmax", axis, x.ndim)
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        out = shifted / np.sum(shifted, axis=axis, keepdims=True)
        ctx.out, ctx.axis = out, axis
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        s = ctx.out
        return (s * (grad - np.sum(grad * s, axis=ctx.axis, keepdims=True)),)


# ---------------------------------------------------------------- shape ops


class Reshape(Op):
    name = "reshape"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, shape: tuple[int, ...]) -> np.ndarray:
        ctx.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise DimensionError(f"reshape: cannot view {x.shape} as {shape}") from None

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (grad.reshape(ctx.shape),)


class Transpose(Op):
    name = "transpose"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axes: tuple[int, ...]) -> np.ndarray:
        if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
            raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
        ctx.inverse = tuple(np.argsort([a % x.ndim for a in axes]))
        return np.transpose(x, axes)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (np.transpose(grad, ctx.inverse),)


class BroadcastTo(Op):
    name = "broadcast_to"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, shape: tuple[int, ...]) -> np.ndarray:
        ctx.shape = x.shape
        try:
            return np.broadcast_to(x, shape).copy()
        except ValueError:
            raise DimensionError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from None

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return (_unbroadcast(grad, ctx.shape),)


class Concat(Op):
    name = "concat"

    @staticmethod
    def forward(ctx: Context, *arrays: np.ndarray, axis: int) -> np.ndarray:
        if not arrays:
            raise DimensionError("concat needs at least one tensor")
        axis = _normalize_axis("concat", axis, arrays[0].ndim)
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            shapes = [a.shape for a in arrays]
            raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
        ctx.axis = axis
        ctx.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return tuple(np.split(grad, ctx.splits, axis=ctx.axis))


class SliceAxis(Op):
    name = "slice"

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, *, axis: int, start: int, stop: int) -> np.ndarray:
        axis = _normalize_axis("slice", axis, x.ndim)
        if not 0 <= start < stop <= x.shape[axis]:
            raise DimensionError(
                f"slice [{start}:{stop}] out of range for axis {axis} of shape {x.shape}"
            )
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, stop)
        ctx.shape, ctx.index = x.shape, tuple(index)
        return x[ctx.index]

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        full = np.zeros(ctx.shape, dtype=grad.dtype)
        full[ctx.index] = grad
        return (full,)


# ---------------------------------------------------------------- products


class MatMul(Op):
    name = "matmul"

    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise DimensionError(
                f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast"
            ) from None
        ctx.a, ctx.b = a, b
        return np.matmul(a, b)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.a, ctx.b
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)


def _as_batch(op: str, x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"{op}: expected [C,H,W] or [N,C,H,W] input, got {x.shape}")


class Conv2d(Op):
    name = "conv2d"

    @staticmethod
    def forward(
        ctx: Context, x: np.ndarray, w: np.ndarray, *bias: np.ndarray, stride: int, padding: int
    ) -> np.ndarray:
        x, squeeze = _as_batch("conv2d", x)
        if w.ndim != 4 or w.shape[1] != x.shape[1]:
            raise DimensionError(f"conv2d: kernels {w.shape} do not match input {x.shape}")
        if stride < 1 or padding < 0:
            raise ConfigError(f"conv2d: stride {stride} / padding {padding} invalid")
        kh, kw = w.shape[2:]
        height, width = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
        if kh > height or kw > width:
            raise DimensionError(
                f"conv2d: kernel {kh}x{kw} larger than padded input {height}x{width}"
            )
        padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if bias:
            out = out + bias[0].reshape(1, -1, 1, 1)
        ctx.padded_shape, ctx.windows, ctx.w = padded.shape, windows, w
        ctx.stride, ctx.padding, ctx.squeeze, ctx.has_bias = stride, padding, squeeze, bool(bias)
        ctx.out_hw = out.shape[2:]
        return out[0] if squeeze else np.ascontiguousarray(out)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        g = grad[None] if ctx.squeeze else grad
        w, s, p = ctx.w, ctx.stride, ctx.padding
        kh, kw = w.shape[2:]
        out_h, out_w = ctx.out_hw
        grad_w = np.tensordot(g, ctx.windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_padded = np.zeros(ctx.padded_shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                grad_padded[:, :, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s] += contrib
        height, width = ctx.padded_shape[2:]
        grad_x = grad_padded[:, :, p : height - p, p : width - p]
        if ctx.squeeze:
            grad_x = grad_x[0]
        grads: tuple[np.ndarray, ...] = (np.ascontiguousarray(grad_x), grad_w.astype(g.dtype))
        if ctx.has_bias:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads


class TransposedConv2d(Op):
    name = "transposed_conv2d"

    @staticmethod
    def forward(
        ctx: Context,
        x: np.ndarray,
        w: np.ndarray,
        *bias: np.ndarray,
        stride: int,
        padding: int,
        require_doubling: bool,
    ) -> np.ndarray:
        x, squeeze = _as_batch("transposed_conv2d", x)
        if w.ndim != 4 or w.shape[0] != x.shape[1]:
            raise DimensionError(
                f"transposed_conv2d: kernels {w.shape} do not match input {x.shape}"
            )
        if stride < 1 or padding < 0:
            raise ConfigError(f"transposed_conv2d: stride {stride} / padding {padding} invalid")
        n, _, h, wd = x.shape
        kh, kw = w.shape[2:]
        full_h, full_w = (h - 1) * stride + kh, (wd - 1) * stride + kw
        if require_doubling and (full_h - 2 * padding != 2 * h or full_w - 2 * padding != 2 * wd):
            raise ConfigError(
                f"transposed_conv2d: kernel {kh}x{kw}, stride {stride}, padding {padding} "
                f"cannot double a {h}x{wd} input"
            )
        if full_h - 2 * padding < 1 or full_w - 2 * padding < 1:
            raise DimensionError(f"transposed_conv2d: padding {padding} crops the whole output")
        full = np.zeros((n, w.shape[1], full_h, full_w), dtype=np.result_type(x, w))
        for i in range(kh):
            for j in range(kw):
                stamp = np.tensordot(x, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                full[:, :, i : i + stride * (h - 1) + 1 : stride, j : j + stride * (wd - 1) + 1 : stride] += stamp
        out = full[:, :, padding : full_h - padding, padding : full_w - padding]
        if bias:
            out = out + bias[0].reshape(1, -1, 1, 1)
        ctx.x, ctx.w, ctx.stride, ctx.padding = x, w, stride, padding
        ctx.full_shape, ctx.squeeze, ctx.has_bias = full.shape, squeeze, bool(bias)
        out = np.ascontiguousarray(out)
        return out[0] if squeeze else out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        g = grad[None] if ctx.squeeze else grad
        x, w, s, p = ctx.x, ctx.w, ctx.stride, ctx.padding
        h, wd = x.shape[2:]
        kh, kw = w.shape[2:]
        full = np.zeros(ctx.full_shape, dtype=g.dtype)
        full[:, :, p : ctx.full_shape[2] - p, p : ctx.full_shape[3] - p] = g
        grad_x = np.zeros(x.shape, dtype=g.dtype)
        grad_w = np.zeros(w.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                window = full[:, :, i : i + s * (h - 1) + 1 : s, j : j + s * (wd - 1) + 1 : s]
                grad_x += np.tensordot(window, w[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                grad_w[:, :, i, j] = np.tensordot(x, window, axes=([0, 2, 3], [0, 2, 3]))
        if ctx.squeeze:
            grad_x = grad_x[0]
        grads: tuple[np.ndarray, ...] = (grad_x, grad_w)
        if ctx.has_bias:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads


class BinaryCrossEntropy(Op):
    """Pixel-mean BCE of probabilities against a binary target.

    Probabilities are clamped to ``[eps, 1 - eps]``; the gradient is taken at the
    clamped value so saturated wrong pixels still receive a signal.
    """

    name = "binary_cross_entropy"

    @staticmethod
    def forward(ctx: Context, p: np.ndarray, t: np.ndarray, *, eps: float) -> np.ndarray:
        if p.shape != t.shape:
            raise DimensionError(f"binary_cross_entropy: shapes {p.shape} and {t.shape} differ")
        pc = np.clip(p.astype(np.float64), eps, 1.0 - eps)
        t64 = t.astype(np.float64)
        ctx.pc, ctx.t, ctx.dtype = pc, t64, p.dtype
        loss = -(t64 * np.log(pc) + (1.0 - t64) * np.log1p(-pc))
        return np.asarray(loss.mean(), dtype=p.dtype)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        pc, t = ctx.pc, ctx.t
        local = (pc - t) / (pc * (1.0 - pc)) / pc.size
        return (np.asarray(grad * local, dtype=ctx.dtype), None)


# ---------------------------------------------------------------- functional API


def constant(value: Any, dtype: Any = None) -> Tensor:
    return Tensor(value, dtype=dtype if dtype is not None else default_dtype())


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def div(a: Tensor, b: Tensor) -> Tensor:
    return Div.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sqrt(x: Tensor) -> Tensor:
    return Sqrt.apply(x)


def gelu(x: Tensor) -> Tensor:
    return Gelu.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def reduce_sum(x: Tensor, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def variance(x: Tensor, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
    return Variance.apply(x, axis=axis, keepdims=keepdims)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    return Transpose.apply(x, axes=tuple(axes))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(x, shape=tuple(shape))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    return SliceAxis.apply(x, axis=axis, start=start, stop=stop)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def conv2d(
    input: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    inputs = (input, kernels) if bias is None else (input, kernels, bias)
    return Conv2d.apply(*inputs, stride=stride, padding=padding)


def transposed_conv2d(
    input: Tensor,
    kernels: Tensor,
    bias: Tensor | None = None,
    stride: int = 2,
    padding: int = 1,
    require_doubling: bool = False,
) -> Tensor:
    inputs = (input, kernels) if bias is None else (input, kernels, bias)
    return TransposedConv2d.apply(
        *inputs, stride=stride, padding=padding, require_doubling=require_doubling
    )


def binary_cross_entropy(pred: Tensor, target: Tensor, eps: float = BCE_CLAMP) -> Tensor:
    return BinaryCrossEntropy.apply(pred, target, eps=eps)
