"""Named trainable parameters and seeded random-stream helpers.

All randomness in the toolkit flows from one user-visible seed through
named substreams, so any component can be re-derived independently of
call order.
"""

from __future__ import annotations

import math
import zlib
from typing import Iterator, Optional

import numpy as np

from .autodiff import Tensor


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (seed, name); stable across runs."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


class Parameter:
    """A named trainable tensor; gradient lives on ``value.grad``."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = Tensor(value, requires_grad=True)

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.value.grad

    def zero_grad(self):
        self.value.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class ParameterSet:
    """Ordered collection of uniquely named parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def n_values(self) -> int:
        return sum(p.value.size for p in self)

    def zero_grad(self):
        for p in self:
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.data for p in self}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in state.items():
            p = self._params[name]
            if arr.shape != p.value.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.value.shape}")
            p.value.data = np.asarray(arr, dtype=np.float64)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)
