"""Self-contained 64-bit PRNG (splitmix64) behind every random draw.

Checkpoints, fold plans and fixtures must be bit-identical across
platforms and library versions, so nothing in this package draws from
``random`` or numpy's generators.  The generator is the standard
splitmix64 sequence: the state advances by the golden-ratio constant and
each output is the mix

    z  = state
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

with all arithmetic mod 2**64.  Uniform doubles are (z >> 11) * 2**-53.
Named substreams are derived from the construction seed only, so the
order in which streams are split off never changes their output.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Deterministic stream of 64-bit values with derived substreams."""

    def __init__(self, seed: int):
        self._seed = seed & _MASK
        self._state = seed & _MASK

    def derive(self, label: str) -> "SplitMix64":
        """Independent child stream keyed by the construction seed and label."""
        h = self._seed
        for b in label.encode("utf-8"):
            h = _mix(((h ^ b) * _FNV_PRIME) & _MASK)
        return SplitMix64(h)

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Vectorised equivalent of n successive uniform() calls."""
        if n == 0:
            return np.empty(0)
        idx = np.arange(1, n + 1, dtype=np.uint64)
        s = np.uint64(self._state) + idx * np.uint64(_GOLDEN)  # wraps mod 2**64
        self._state = int(s[-1])
        z = (s ^ (s >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return lo + (hi - lo) * u

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"below() needs a positive bound, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.below(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample(self, seq, k: int) -> list:
        """k items without replacement (partial Fisher-Yates)."""
        if k > len(seq):
            raise ValueError(f"cannot sample {k} items from {len(seq)}")
        pool = list(seq)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller normal deviate."""
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
