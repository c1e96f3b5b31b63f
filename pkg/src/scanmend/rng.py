"""Deterministic random number generation.

Everything stochastic in this package draws from :class:`Rng`, a counter-based
generator built on the splitmix64 finalizer.  The i-th raw output for seed s is

    mix64(s + (i+1) * GAMMA)          (all arithmetic mod 2**64)

where GAMMA = 0x9E3779B97F4A7C15 (the 64-bit golden ratio) and mix64 is the
standard splitmix64 avalanche.  Because each output depends only on (seed,
counter), block generation vectorizes cleanly and the stream is identical on
every platform.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64_scalar(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic in numpy wraps mod 2**64, matching the scalar path
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """Counter-based deterministic RNG (splitmix64 core).

    Same seed gives the same draw sequence on every platform.  An instance is
    single-owner: it must not be shared between threads.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._counter = 0

    def _raw(self, count: int) -> np.ndarray:
        """Next `count` raw uint64 outputs."""
        start = self._counter
        self._counter += count
        idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        base = (np.uint64(self.seed) + idx * np.uint64(_GAMMA))
        return _mix64_array(base)

    def next_u64(self) -> int:
        self._counter += 1
        return _mix64_scalar(self.seed + self._counter * _GAMMA)

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1) with 53-bit resolution."""
        if size is None:
            return (self.next_u64() >> 11) * (2.0 ** -53)
        n = int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(size)

    def normal(self, size=None, std: float = 1.0) -> np.ndarray | float:
        """Gaussian draws via Box-Muller on consecutive uniform pairs."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        pairs = (n + 1) // 2
        u = (self._raw(2 * pairs) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        u1 = np.maximum(u[:pairs], 2.0 ** -53)  # avoid log(0)
        u2 = u[pairs:]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2.0 * np.pi * u2),
                              r * np.sin(2.0 * np.pi * u2)])[:n] * std
        if scalar:
            return float(out[0])
        return out.reshape(size)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (_MASK + 1) - (_MASK + 1) % n
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def randint_array(self, n: int, size) -> np.ndarray:
        count = int(np.prod(size))
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            out[i] = self.randint(n)
        return out.reshape(size)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.array(idx, dtype=np.int64)

    def spawn(self, stream_id: int) -> "Rng":
        """Independent child stream for (seed, stream_id).

        Children of distinct ids never share outputs with each other or with
        the parent, regardless of how much either has drawn.
        """
        return Rng(_mix64_scalar(self.seed ^ _mix64_scalar((stream_id + 1) * _GAMMA)))
