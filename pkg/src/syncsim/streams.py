"""Purpose-keyed random streams.

Every random quantity in a replication comes from its own generator, keyed
by (seed, purpose, run, node, ...). Changing how many draws one purpose
consumes therefore never shifts another purpose's values, which is what
keeps swept experiments paired.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    DURATION = 1
    FAILURE = 2
    JOIN = 3
    PREDICTION = 4
    MOBILITY = 5
    LOCAL = 6
    GRAPH = 7
    CONTROLLER = 8
    PREDICTION_SHARED = 9


def stream(seed: int, purpose: Purpose, *key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(purpose), *(int(k) for k in key)])


class Streams:
    """Lazily materialized per-(purpose, key) draw blocks for one replication."""

    def __init__(self, seed: int, block: int = 64):
        self.seed = int(seed)
        self.block = block
        self._normal: dict[tuple, np.ndarray] = {}
        self._uniform: dict[tuple, np.ndarray] = {}

    def _fetch(self, cache: dict, kind: str, purpose: Purpose, key: tuple, index: int) -> float:
        k = (purpose, *key)
        arr = cache.get(k)
        if arr is None or index >= len(arr):
            n = max(self.block, index + 1)
            if arr is not None:
                n = max(n, 2 * len(arr))
            rng = stream(self.seed, purpose, *key)
            arr = rng.standard_normal(n) if kind == "normal" else rng.random(n)
            cache[k] = arr
        return float(arr[index])

    def normal(self, purpose: Purpose, key: tuple, index: int) -> float:
        """Standard-normal draw number ``index`` of stream ``(purpose, *key)``."""
        return self._fetch(self._normal, "normal", purpose, key, index)

    def uniform(self, purpose: Purpose, key: tuple, index: int) -> float:
        """U[0, 1) draw number ``index`` of stream ``(purpose, *key)``."""
        return self._fetch(self._uniform, "uniform", purpose, key, index)

    def forget_run(self, run: int) -> None:
        """Drop cached blocks keyed by ``run`` (first key element)."""
        for cache in (self._normal, self._uniform):
            for k in [k for k in cache if len(k) > 1 and k[1] == run]:
                del cache[k]
