"""Deterministic seed derivation and addressable coin streams.

Every random quantity in a simulation is reached by a pure integer path
from one master seed, so any sub-computation (a single sensor's coin on a
single query, one replication's training set) can be reproduced in
isolation and results never depend on evaluation order or worker count.

Two mechanisms:

* ``derive_seed`` folds an integer path into a 64-bit seed for a numpy
  ``Generator`` (bulk i.i.d. sampling).
* ``CoinSource`` is a counter-based stream: the uniform at address
  ``(sensor, query)`` is a hash of ``(seed, sensor, query)``, computable
  scalar-wise or for whole index arrays with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays (wraparound intended)."""
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def _fold(seed: int, parts: tuple) -> np.ndarray:
    """Absorb integer path components (scalars or arrays) into a state."""
    state = _mix(np.asarray(seed & _MASK, dtype=np.uint64))
    for part in parts:
        if isinstance(part, np.ndarray):
            part = part.astype(np.uint64, copy=False)
        else:
            part = np.asarray(int(part) & _MASK, dtype=np.uint64)
        state = _mix(state ^ _mix(part))
    return state


def derive_seed(seed: int, *path: int) -> int:
    """Derive a child seed from ``seed`` and an integer path.

    Distinct paths give (statistically) independent child seeds; the same
    path always gives the same child.
    """
    return int(_fold(seed, path))


def derived_rng(seed: int, *path: int) -> np.random.Generator:
    """numpy Generator seeded by ``derive_seed(seed, *path)``."""
    return np.random.default_rng(derive_seed(seed, *path))


def _to_unit(bits: np.ndarray) -> np.ndarray:
    return (bits >> _U64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class CoinSource:
    """Seeded stream of uniform [0,1) values addressed by (sensor, query).

    The value at an address is a pure function of ``(seed, sensor, query)``:
    the same address always yields the same value, distinct addresses yield
    independent values, and array lookups agree bit-for-bit with scalar ones.
    """

    seed: int

    def uniform(self, sensor: int, query: int) -> float:
        return float(_to_unit(_fold(self.seed, (sensor, query))))

    def uniform_array(self, sensors, queries) -> np.ndarray:
        """Vectorized lookup; ``sensors`` and ``queries`` broadcast together."""
        sensors = np.asarray(sensors, dtype=np.uint64)
        queries = np.asarray(queries, dtype=np.uint64)
        sensors, queries = np.broadcast_arrays(sensors, queries)
        return _to_unit(_fold(self.seed, (sensors, queries)))
