"""Named parameter ledgers and their initialization.

A ledger is the ordered list of ``ParamSpec`` entries a model needs. The same
ledger drives allocation, parameter counting and checkpoint validation, so the
three can never disagree.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from typing import Literal, NamedTuple

import numpy as np
from scipy.stats import truncnorm

from ..core.errors import ConfigError
from ..core.tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)

InitRule = Literal["normal", "zeros", "ones"]
ParameterTable = dict[str, Tensor]

INIT_STD = 0.02


class ParamSpec(NamedTuple):
    name: str
    shape: tuple[int, ...]
    init: InitRule = "normal"

    @property
    def count(self) -> int:
        return int(np.prod(self.shape))


def ledger_count(ledger: Iterable[ParamSpec]) -> int:
    return sum(spec.count for spec in ledger)


def _draw(spec: ParamSpec, rng: np.random.Generator, dtype: np.dtype) -> np.ndarray:
    if spec.init == "zeros":
        return np.zeros(spec.shape, dtype=dtype)
    if spec.init == "ones":
        return np.ones(spec.shape, dtype=dtype)
    if spec.init == "normal":
        values = truncnorm.rvs(-2.0, 2.0, scale=INIT_STD, size=spec.shape, random_state=rng)
        return np.asarray(values, dtype=dtype)
    raise ConfigError(f"unknown init rule {spec.init!r} for {spec.name}")


def initialize(ledger: Iterable[ParamSpec], seed: int, dtype=None) -> ParameterTable:
    """Allocate every ledger entry; weights are truncated normal (std 0.02, +-2 std)."""
    dtype = np.dtype(dtype) if dtype is not None else default_dtype()
    rng = np.random.default_rng(seed)
    table: ParameterTable = {}
    for spec in ledger:
        if spec.name in table:
            raise ConfigError(f"duplicate parameter name {spec.name}")
        table[spec.name] = Tensor(_draw(spec, rng, dtype), requires_grad=True, name=spec.name)
    logger.debug(f"Initialized {len(table)} tensors ({ledger_count(ledger_specs(table))} scalars)")
    return table


def ledger_specs(table: ParameterTable) -> list[ParamSpec]:
    return [ParamSpec(name, tensor.shape) for name, tensor in table.items()]


def require(table: ParameterTable, name: str) -> Tensor:
    try:
        return table[name]
    except KeyError:
        raise ConfigError(f"parameter table has no entry {name!r}") from None
