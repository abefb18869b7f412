"""Deterministic, counter-based random sampling.

Every randomized experiment in this package draws from :class:`RngState`,
a SplitMix64 counter generator (constants from Steele et al. / Vigna's
splitmix64.c).  The 64-bit integer stream is a pure function of
``(seed, counter)``, so identical seeds reproduce identical streams
bit-for-bit on every platform, and independent substreams for parallel
trials can be derived without coordination.

Normal variates come from a Box-Muller transform of the uniform stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int, modulo 2**64."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


@dataclass
class RngState:
    """Counter-based generator state: a seed plus a draw counter."""

    seed: int
    counter: int = field(default=0)

    def next_u64(self, count: int) -> np.ndarray:
        """Return the next `count` raw 64-bit outputs and advance the counter."""
        if count < 0:
            raise ValueError(f"count must be nonnegative, got {count}")
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        base = np.uint64(self.seed & _MASK)
        return _mix64_array(base + idx * np.uint64(_GAMMA))

    def uniform(self, count: int) -> np.ndarray:
        """i.i.d. uniforms on [0, 1) with 53-bit resolution."""
        bits = self.next_u64(count)
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, count: int) -> np.ndarray:
        """i.i.d. standard normals via Box-Muller on uniform pairs."""
        pairs = (count + 1) // 2
        bits = self.next_u64(2 * pairs)
        # u1 in (0, 1] so log never sees zero; u2 in [0, 1).
        u1 = ((bits[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (bits[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]

    def spawn(self, index: int) -> "RngState":
        """Derive an independent substream, e.g. one per Monte Carlo trial.

        The child seed is a SplitMix64 hash of (seed, index), so results do
        not depend on the order or parallelism with which trials run.
        """
        child = _mix64((self.seed & _MASK) ^ _mix64(index ^ _GAMMA))
        return RngState(seed=child)


def gaussian_matrix(rng: RngState, rows: int, cols: int) -> np.ndarray:
    """Matrix of i.i.d. N(0, 1) draws, advancing `rng`."""
    if rows < 1 or cols < 1:
        raise ValueError(f"gaussian_matrix needs positive shape, got {rows}x{cols}")
    return rng.normal(rows * cols).reshape(rows, cols)
