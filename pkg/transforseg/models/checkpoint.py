"""Binary checkpoint codec.

Layout (little-endian)::

    b"TFSG" | u32 version | u32 header length | header JSON (canonical)
    | u32 tensor count
    | per tensor: u32 name length | UTF-8 name | u8 rank | u32 dims... | float32 payload
    | u32 CRC32 of every preceding byte

The header JSON holds ``{"model": ModelConfig, "meta": TrainingMeta}``.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..core.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
)
from ..core.tensor import Tensor
from ..utils.io import write_atomic
from .params import ParameterTable
from .vit import ModelConfig, TransForSeg, model_ledger

logger = logging.getLogger(__name__)

MAGIC = b"TFSG"
FORMAT_VERSION = 1
_PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class TrainingMeta:
    epoch: int = 0
    val_mse: float | None = None
    seed: int = 0
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ParameterTable
    meta: TrainingMeta
    version: int = FORMAT_VERSION

    def model(self) -> TransForSeg:
        return TransForSeg(self.config, self.params)


def canonical_json(data: Any) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def encode_checkpoint(params: ParameterTable, config: ModelConfig, meta: TrainingMeta) -> bytes:
    header = canonical_json({"model": config.to_dict(), "meta": asdict(meta)})
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header)), header]
    chunks.append(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<B{tensor.ndim}I", tensor.ndim, *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype=_PAYLOAD_DTYPE).tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint truncated while reading {what} at byte {self.offset}"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[: len(MAGIC)] != MAGIC[: len(data)] or len(data) == 0:
        raise CheckpointFormatError("not a transforseg checkpoint (bad magic bytes)")
    reader = _Reader(data)
    reader.take(len(MAGIC), "magic")
    (version,) = reader.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    (header_len,) = reader.unpack("<I", "header length")
    try:
        header = json.loads(reader.take(header_len, "header").decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"checkpoint header is not valid JSON: {e}") from None

    (count,) = reader.unpack("<I", "tensor count")
    arrays: dict[str, np.ndarray] = {}
    for index in range(count):
        (name_len,) = reader.unpack("<I", f"name length of tensor {index}")
        try:
            name = reader.take(name_len, f"name of tensor {index}").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"name of tensor {index} is not UTF-8") from None
        (rank,) = reader.unpack("<B", f"rank of {name}")
        dims = reader.unpack(f"<{rank}I", f"dims of {name}")
        size = int(np.prod(dims)) * _PAYLOAD_DTYPE.itemsize
        payload = reader.take(size, f"payload of {name}")
        arrays[name] = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(dims).astype(np.float32)

    remaining = len(data) - reader.offset
    if remaining < 4:
        raise CheckpointTruncatedError("checkpoint truncated before the CRC trailer")
    if remaining > 4:
        raise CheckpointFormatError(f"{remaining - 4} unexpected bytes after the tensor table")
    (stored_crc,) = struct.unpack("<I", data[reader.offset :])
    if zlib.crc32(data[: reader.offset]) != stored_crc:
        raise CheckpointFormatError("checkpoint CRC mismatch (file corrupted or tampered)")

    try:
        config = ModelConfig.from_dict(header["model"])
        meta = TrainingMeta(**header.get("meta", {}))
    except (KeyError, TypeError, ConfigError) as e:
        raise CheckpointFormatError(f"checkpoint header is invalid: {e}") from None

    expected = {spec.name: spec.shape for spec in model_ledger(config)}
    if set(expected) != set(arrays):
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        raise CheckpointShapeError(f"checkpoint tensors do not match config: missing {missing}, unexpected {extra}")
    for name, array in arrays.items():
        if array.shape != expected[name]:
            raise CheckpointShapeError(
                f"checkpoint tensor {name} has shape {array.shape}, config requires {expected[name]}"
            )

    params = {
        name: Tensor(array, requires_grad=True, name=name, dtype=np.float32)
        for name, array in arrays.items()
    }
    return Checkpoint(config=config, params=params, meta=meta, version=version)


def save_checkpoint(
    params: ParameterTable, config: ModelConfig, meta: TrainingMeta, path: str | os.PathLike
) -> Path:
    target = write_atomic(path, encode_checkpoint(params, config, meta))
    logger.info(f"Saved checkpoint to {target} (epoch {meta.epoch}, val MSE {meta.val_mse})")
    return target


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    data = Path(path).read_bytes()
    checkpoint = decode_checkpoint(data)
    logger.info(f"Loaded {checkpoint.config.variant} checkpoint from {path}")
    return checkpoint
