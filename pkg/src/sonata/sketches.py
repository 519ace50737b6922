"""Approximate per-window state: count-min sketches and bloom filters.

Sizing follows the standard guarantees.  For an additive error of at most
``eps * N`` (N = total updates in the window) with failure probability
``delta``, a count-min sketch needs ``m = ceil(e / eps)`` counters per row
and ``k = ceil(ln(1 / delta))`` rows.  Both knobs come from one per-query
error tolerance, so ``eps = delta = tolerance``.  Estimates are one-sided:
hash collisions only inflate counters, so the reported minimum never falls
below the true count.  Bloom filters reuse the same ``m`` and ``k`` as bit
positions and probe count; membership answers may have false positives but
never false negatives.

Hashing is a chunked multiply-shift family over the key's canonical byte
encoding: each row owns an odd 64-bit seed, the key is folded 8 bytes at a
time through xor-multiply, and the mixed word's high bits select a column.
Seeds derive from the run-level RNG seed, so a run is reproducible end to
end.
"""

from __future__ import annotations

import math
from array import array
from random import Random

from .encoding import record_bytes

COUNTER_BITS = 32
_COUNTER_MAX = (1 << COUNTER_BITS) - 1
_MASK64 = (1 << 64) - 1


def sketch_dimensions(error_tolerance: float) -> tuple[int, int]:
    """Columns and rows for a given error tolerance (eps = delta = tol)."""
    if not 0 < error_tolerance < 1:
        raise ValueError(f"error tolerance {error_tolerance} outside (0,1)")
    m = math.ceil(math.e / error_tolerance)
    k = math.ceil(math.log(1 / error_tolerance))
    return m, k


def draw_seeds(rng: Random, count: int) -> tuple[int, ...]:
    """Pairwise-distinct odd 64-bit multipliers."""
    seeds: list[int] = []
    seen = set()
    while len(seeds) < count:
        seed = (rng.getrandbits(64) | 1) & _MASK64
        if seed not in seen:
            seen.add(seed)
            seeds.append(seed)
    return tuple(seeds)


def _mix(data: bytes, seed: int) -> int:
    h = seed
    for offset in range(0, len(data), 8):
        chunk = int.from_bytes(data[offset:offset + 8], "big")
        h = ((h ^ chunk) * seed) & _MASK64
    return h


class _Hashes:
    """One column index per row for a given key."""

    __slots__ = ("seeds", "m", "_cache")

    def __init__(self, seeds: tuple[int, ...], m: int):
        self.seeds = seeds
        self.m = m
        self._cache: dict[bytes, tuple[int, ...]] = {}

    def indices(self, key: bytes) -> tuple[int, ...]:
        cached = self._cache.get(key)
        if cached is None:
            m = self.m
            cached = tuple((_mix(key, seed) >> 16) % m for seed in self.seeds)
            self._cache[key] = cached
        return cached

    def clear_cache(self):
        self._cache.clear()


def key_bytes(key: tuple) -> bytes:
    """Canonical bytes for a record key tuple."""
    return record_bytes(key)


class CountMinSketch:
    """k x m grid of saturating 32-bit counters with a min-estimate read."""

    def __init__(self, m: int, k: int, seeds: tuple[int, ...]):
        if len(seeds) != k:
            raise ValueError(f"need {k} seeds, got {len(seeds)}")
        if len(set(seeds)) != k:
            raise ValueError("hash seeds must be pairwise distinct")
        self.m = m
        self.k = k
        self._hashes = _Hashes(seeds, m)
        self._rows = [array("I", [0]) * m for _ in range(k)]

    def update(self, key: bytes, delta: int = 1) -> int:
        """Add ``delta`` for ``key`` and return the post-update estimate."""
        estimate = _COUNTER_MAX
        for row, index in zip(self._rows, self._hashes.indices(key)):
            value = row[index] + delta
            if value > _COUNTER_MAX:
                value = _COUNTER_MAX
            row[index] = value
            if value < estimate:
                estimate = value
        return estimate

    def estimate(self, key: bytes) -> int:
        return min(row[index]
                   for row, index in zip(self._rows, self._hashes.indices(key)))

    def reset(self):
        for row in self._rows:
            for i in range(self.m):
                row[i] = 0
        self._hashes.clear_cache()

    @property
    def state_bits(self) -> int:
        return self.k * self.m * COUNTER_BITS


class BloomFilter:
    """m-bit membership filter probed at k positions per key."""

    def __init__(self, m: int, k: int, seeds: tuple[int, ...]):
        if len(seeds) != k:
            raise ValueError(f"need {k} seeds, got {len(seeds)}")
        if len(set(seeds)) != k:
            raise ValueError("hash seeds must be pairwise distinct")
        self.m = m
        self.k = k
        self._hashes = _Hashes(seeds, m)
        self._bits = bytearray((m + 7) // 8)

    def add(self, key: bytes) -> bool:
        """Insert; True if every probed bit was already set."""
        present = True
        for index in self._hashes.indices(key):
            byte, bit = index >> 3, 1 << (index & 7)
            if not self._bits[byte] & bit:
                present = False
                self._bits[byte] |= bit
        return present

    def contains(self, key: bytes) -> bool:
        return all(self._bits[index >> 3] & (1 << (index & 7))
                   for index in self._hashes.indices(key))

    def reset(self):
        for i in range(len(self._bits)):
            self._bits[i] = 0
        self._hashes.clear_cache()

    @property
    def state_bits(self) -> int:
        return self.m
