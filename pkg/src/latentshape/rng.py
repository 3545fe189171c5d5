"""Deterministic pseudo-random streams, identical on every platform.

The generator is xoshiro256** seeded through SplitMix64, implemented over
Python integers so the stream never depends on numpy build details.  All
consumers draw in a fixed, documented order:

* ``uniforms(n)`` takes n raw 64-bit words; each maps to [0, 1) via the top
  53 bits, ``(w >> 11) * 2**-53``.
* ``normals(n)`` takes ``2 * ceil(n / 2)`` uniforms and applies Box-Muller
  pairwise: ``r = sqrt(-2 ln(1 - u1))``, then ``r cos(2 pi u2)`` followed by
  ``r sin(2 pi u2)``.  The first n values are returned.
* ``permutation(n)`` takes n uniforms and argsorts them.
* ``integers_below(bound, n)`` takes n uniforms, ``floor(u * bound)``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state once.  Returns (new_state, output word)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *salts) -> int:
    """Mix a base seed with string or integer salts into a fresh 64-bit seed.

    Used to give independent, reproducible streams (data vs. init vs. noise)
    to different parts of a run without manual seed bookkeeping.
    """
    state = seed & _MASK
    for salt in salts:
        if isinstance(salt, str):
            words = [int.from_bytes(salt.encode("utf8"), "little") & _MASK,
                     len(salt)]
        else:
            words = [int(salt) & _MASK]
        for w in words:
            state, out = splitmix64(state ^ w)
            state ^= out
    state, out = splitmix64(state)
    return out


class Rng:
    """xoshiro256** stream with SplitMix64 state seeding."""

    def __init__(self, seed: int):
        if not isinstance(seed, int):
            raise TypeError(f"seed must be an int, got {type(seed).__name__}")
        s = seed & _MASK
        state = []
        for _ in range(4):
            s, word = splitmix64(s)
            state.append(word)
        # xoshiro must not start in the all-zero state
        if not any(state):
            state[0] = 1
        self._s = state

    def next_u64(self) -> int:
        (w,) = self._words(1)
        return int(w)

    def _words(self, n: int) -> np.ndarray:
        """Draw n raw 64-bit words in stream order."""
        s0, s1, s2, s3 = self._s
        out = np.empty(n, dtype=np.uint64)
        M = _MASK
        for i in range(n):
            x = (s1 * 5) & M
            out[i] = ((((x << 7) | (x >> 57)) & M) * 9) & M
            t = (s1 << 17) & M
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & M
        self._s = [s0, s1, s2, s3]
        return out

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), 53-bit resolution."""
        if n < 0:
            raise ValueError("n must be >= 0")
        w = self._words(n)
        return (w >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        """n standard normal doubles via Box-Muller."""
        if n < 0:
            raise ValueError("n must be >= 0")
        m = (n + 1) // 2
        u = self.uniforms(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log away from 0
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(ang)
        out[1::2] = r * np.sin(ang)
        return out[:n]

    def integers_below(self, bound: int, n: int) -> np.ndarray:
        """n integers uniform on {0, ..., bound-1}."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        idx = np.floor(self.uniforms(n) * bound).astype(np.int64)
        return np.minimum(idx, bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n): argsort of n fresh uniforms."""
        return np.argsort(self.uniforms(n), kind="stable")

    def spawn(self, *salts) -> "Rng":
        """Independent child stream keyed by the salts and one fresh word."""
        return Rng(derive_seed(self.next_u64(), *salts))
