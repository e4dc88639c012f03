"""SplitMix64 stream used for every random draw in the package.

The k-th output of a generator seeded with ``s`` is ``mix(s + k * GAMMA)``
(k starting at 1), so blocks of draws can be produced with vectorised uint64
arithmetic and still match the scalar sequence exactly.
"""
import zlib

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed, label):
    """Stable child seed for a named stage, e.g. ``derive_seed(7, "refine.init")``."""
    return mix64((int(seed) & MASK64) ^ mix64(zlib.crc32(label.encode("utf-8")) + GAMMA))


class SplitMix64:
    def __init__(self, seed=0):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def u64_array(self, n):
        n = int(n)
        with np.errstate(over="ignore"):
            k = np.arange(1, n + 1, dtype=np.uint64)
            states = np.uint64(self.state) + k * np.uint64(GAMMA)
            out = _mix64_array(states)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def random(self):
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def random_array(self, n):
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform_array(self, low, high, n):
        return low + (high - low) * self.random_array(n)

    def normal_array(self, n):
        # Box-Muller, cosine branch only: one normal per pair of uniforms.
        u = self.random_array(2 * int(n)).reshape(-1, 2)
        u1 = 1.0 - u[:, 0]  # (0, 1]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u[:, 1])

    def randbelow(self, n):
        """Integer in [0, n) via floor(n * uniform)."""
        return min(int(self.random() * n), n - 1)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def sample(self, n, k):
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates)."""
        perm = np.arange(n)
        for i in range(k):
            j = i + self.randbelow(n - i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm[:k].copy()
