import dataclasses
import functools

import numpy as np
import pytest

from layerfid.topology import heavy_hex_preset


@functools.lru_cache(maxsize=None)
def preset(size):
    return heavy_hex_preset(size)


@pytest.fixture
def hh127():
    return preset(127)


@pytest.fixture
def hh156():
    return preset(156)


@dataclasses.dataclass(frozen=True)
class Decay:
    """Minimal stand-in for RB data: counts may be fractional for exact-model tests."""

    gate: tuple
    lengths: tuple
    counts: np.ndarray
    shots: int


def exact_decay(a, alpha, b, lengths, gate=(0, 1), rows=1, shots=1):
    x = np.asarray(lengths, dtype=float)
    p = a * alpha ** x + b
    return Decay(tuple(gate), tuple(lengths), np.tile(p * shots, (rows, 1)), shots)
