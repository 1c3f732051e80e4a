"""Dense tensors and the reverse-mode computation record.

A :class:`Tensor` wraps a read-only numpy array. Operations are subclasses of
:class:`Op`; applying one while a :class:`ComputationRecord` is active appends
a :class:`Node` holding the op, its inputs, its output and whatever the
forward pass cached for the backward pass. :func:`backward` walks that record
in reverse and returns exact gradients for every leaf.

The active record and the working precision live in context variables, so
each thread or task owns its own record and precision setting.
"""

from __future__ import annotations

import contextvars
import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from .errors import ContractError, DimensionError, NonFiniteError

logger = logging.getLogger(__name__)

_SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_default_dtype: contextvars.ContextVar[np.dtype] = contextvars.ContextVar(
    "transforseg_dtype", default=np.dtype(np.float32)
)
_active_record: contextvars.ContextVar[ComputationRecord | None] = (
    contextvars.ContextVar("transforseg_record", default=None)
)


def default_dtype() -> np.dtype:
    """Return the float dtype new tensors are created with."""
    return _default_dtype.get()


@contextmanager
def precision(dtype: Any) -> Iterator[np.dtype]:
    """Switch the working precision (float32 or float64) inside a block."""
    resolved = np.dtype(dtype)
    if resolved not in _SUPPORTED_DTYPES:
        raise ContractError(f"unsupported precision {resolved}; use float32 or float64")
    token = _default_dtype.set(resolved)
    try:
        yield resolved
    finally:
        _default_dtype.reset(token)


@contextmanager
def no_record() -> Iterator[None]:
    """Evaluate operations without appending them to the active record."""
    token = _active_record.set(None)
    try:
        yield
    finally:
        _active_record.reset(token)


def ensure_finite(array: np.ndarray, where: str) -> None:
    if not np.isfinite(array).all():
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{bad} non-finite value(s) produced by {where}")


class Tensor:
    """Immutable dense float array with optional gradient tracking."""

    __slots__ = ("_data", "grad", "name", "requires_grad")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ):
        array = np.array(data, dtype=dtype if dtype is not None else default_dtype())
        ensure_finite(array, "tensor creation")
        array.flags.writeable = False
        self._data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool) -> Tensor:
        tensor = cls.__new__(cls)
        array = np.require(array, requirements="C")
        array.flags.writeable = False
        tensor._data = array
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        return tensor

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self._data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor._wrap(self._data, requires_grad=False)

    def assign(self, array: np.ndarray) -> None:
        """Replace the stored values in place of the optimizer or a perturbation.

        The new array must have the same shape; values are copied and checked.
        """
        array = np.array(array, dtype=self.dtype)
        if array.shape != self.shape:
            raise DimensionError(
                f"cannot assign shape {array.shape} to tensor of shape {self.shape}"
            )
        ensure_finite(array, f"assign to {self.name or 'tensor'}")
        array.flags.writeable = False
        self._data = array

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype}, "
            f"requires_grad={self.requires_grad}{label})"
        )

    def __add__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.matmul(self, other)

    def __neg__(self) -> Tensor:
        from . import ops

        return ops.scale(self, -1.0)


class Context:
    """Scratch namespace a forward pass fills for its backward pass."""


class Op:
    """A differentiable primitive.

    Subclasses implement ``forward(ctx, *arrays, **attrs)`` returning an array and
    ``backward(ctx, grad)`` returning one gradient (or ``None``) per input.
    """

    name: ClassVar[str] = "op"

    @staticmethod
    def forward(ctx: Context, *arrays: np.ndarray, **attrs: Any) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **attrs: Any) -> Tensor:
        ctx = Context()
        out = np.asarray(cls.forward(ctx, *(t.data for t in inputs), **attrs))
        ensure_finite(out, cls.name)
        requires_grad = any(t.requires_grad for t in inputs)
        result = Tensor._wrap(out, requires_grad)
        record = _active_record.get()
        if record is not None and requires_grad:
            record.append(Node(cls, tuple(inputs), result, ctx, attrs))
        return result


@dataclass
class Node:
    op: type[Op]
    inputs: tuple[Tensor, ...]
    output: Tensor
    ctx: Context
    attrs: dict[str, Any] = field(default_factory=dict)

    @property
    def input_ids(self) -> tuple[int, ...]:
        return tuple(id(t) for t in self.inputs)

    @property
    def output_id(self) -> int:
        return id(self.output)


class ComputationRecord:
    """Ordered list of nodes produced while the record is active.

    Use as a context manager; a record belongs to the context that entered it
    and must not be shared between concurrent executions.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._token: contextvars.Token | None = None

    def __enter__(self) -> ComputationRecord:
        if self._token is not None:
            raise ContractError("computation record is already active")
        self._token = _active_record.set(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        if self._token is not None:
            _active_record.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def append(self, node: Node) -> None:
        self.nodes.append(node)

    def produced_ids(self) -> set[int]:
        return {node.output_id for node in self.nodes}

    def leaves(self) -> list[Tensor]:
        """Gradient-tracking inputs that no node in the record produced."""
        produced = self.produced_ids()
        seen: set[int] = set()
        leaves: list[Tensor] = []
        for node in self.nodes:
            for tensor in node.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
        return leaves

    def replay(self) -> list[np.ndarray]:
        """Recompute every node from the current leaf values, in record order."""
        values: dict[int, np.ndarray] = {}
        outputs: list[np.ndarray] = []
        for node in self.nodes:
            arrays = [values.get(id(t), t.data) for t in node.inputs]
            out = np.asarray(node.op.forward(Context(), *arrays, **node.attrs))
            values[node.output_id] = out
            outputs.append(out)
        return outputs


GradientMap = dict[Tensor, np.ndarray]


def backward(record: ComputationRecord, loss: Tensor) -> GradientMap:
    """Propagate d(loss)/d(.) through ``record``.

    Every gradient-tracking leaf of the record gets an entry (zeros when the
    loss does not depend on it); leaves also get their ``grad`` attribute set.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if id(loss) not in record.produced_ids():
        raise ContractError("loss was not produced inside this computation record")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(record.nodes):
        grad = grads.pop(node.output_id, None)
        if grad is None:
            continue
        input_grads = node.op.backward(node.ctx, grad)
        for tensor, input_grad in zip(node.inputs, input_grads, strict=True):
            if input_grad is None or not tensor.requires_grad:
                continue
            if input_grad.shape != tensor.shape:
                raise DimensionError(
                    f"{node.op.name} backward produced {input_grad.shape} "
                    f"for input of shape {tensor.shape}"
                )
            key = id(tensor)
            grads[key] = grads[key] + input_grad if key in grads else input_grad

    result: GradientMap = {}
    for leaf in record.leaves():
        grad = grads.get(id(leaf))
        grad = (
            np.zeros_like(leaf.data)
            if grad is None
            else np.asarray(grad, dtype=leaf.dtype)
        )
        leaf.grad = grad
        result[leaf] = grad
    return result


def _central_difference(
    fn: Callable[[Tensor], Tensor], base: np.ndarray, epsilon: float
) -> np.ndarray:
    numeric = np.zeros(base.shape, dtype=np.float64)
    flat = base.reshape(-1)
    with no_record():
        for i in range(flat.size):
            shifted = flat.copy()
            shifted[i] = flat[i] + epsilon
            step_up = float(shifted[i])
            upper = fn(Tensor(shifted.reshape(base.shape), dtype=base.dtype)).item()
            shifted[i] = flat[i] - epsilon
            step_down = float(shifted[i])
            lower = fn(Tensor(shifted.reshape(base.shape), dtype=base.dtype)).item()
            # the representable step differs from 2*epsilon at float32
            numeric.reshape(-1)[i] = (upper - lower) / (step_up - step_down)
    return numeric


def grad_check(
    fn: Callable[[Tensor], Tensor],
    input: Tensor,
    epsilon: float | None = None,
    reference: Callable[[Tensor], Tensor] | None = None,
    floor: float = 1e-4,
) -> float:
    """Worst discrepancy between analytic and central-difference gradients.

    The result is ``max |a - n|`` divided by the largest magnitude found in
    either gradient, so a backward pass that drops or rescales a term scores
    near 1 whatever the size of the gradient. Gradients whose largest
    magnitude stays below ``floor`` are compared in absolute terms.

    ``reference`` computes the same function in float64; when given, the
    finite differences use it instead of ``fn``.
    ``epsilon`` defaults to 1e-6 for float64 differences and 1e-2 otherwise.
    """
    dtype = input.dtype
    numeric_dtype = np.dtype(np.float64) if reference is not None else dtype
    if epsilon is None:
        epsilon = 1e-6 if numeric_dtype == np.float64 else 1e-2
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    if floor <= 0:
        raise ContractError(f"floor must be positive, got {floor}")

    base = np.array(input.data, dtype=dtype)
    leaf = Tensor(base, requires_grad=True, dtype=dtype)
    with ComputationRecord() as record:
        out = fn(leaf)
    if out.size != 1:
        raise ContractError(f"grad_check needs a scalar function, got shape {out.shape}")
    analytic = backward(record, out)[leaf] if out.requires_grad else np.zeros_like(base)
    if not base.size:
        return 0.0

    if reference is None:
        numeric = _central_difference(fn, base, epsilon)
    else:
        with precision(np.float64):
            numeric = _central_difference(reference, base.astype(np.float64), epsilon)

    analytic = analytic.astype(np.float64)
    worst = float(np.max(np.abs(analytic - numeric)))
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    error = worst / max(scale, floor)
    logger.debug(f"grad_check over {base.size} coordinates: worst error {error:.3e}")
    return error
