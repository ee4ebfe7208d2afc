"""Deterministic random number streams.

A 64-bit seed is expanded with splitmix64 into the 256-bit state of an
xoshiro256** generator. Each stochastic concern (releases, durations,
breakdowns, demand, agent exploration, ...) gets its own named stream so
that sampling order in one concern never perturbs another. The generators
are implemented in plain integer arithmetic so the byte-level output is
identical on every platform and can be pinned in test fixtures.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MUL2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SPLITMIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MUL2) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class RngStream:
    """xoshiro256** stream derived from (seed, stream name).

    The name is folded into the seed via FNV-1a before splitmix64 expansion,
    so streams with different names are decorrelated even for equal seeds.
    """

    def __init__(self, seed: int, name: str = ""):
        self.seed = seed & MASK64
        self.name = name
        base = self.seed ^ fnv1a64(name.encode("utf-8"))
        state = base
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        if not any(s):  # all-zero state is a fixed point of xoshiro
            s[0] = _SPLITMIX_GAMMA
        self._s = s

    def getstate(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def setstate(self, state) -> None:
        self._s = list(state)

    def clone(self) -> "RngStream":
        other = RngStream.__new__(RngStream)
        other.seed = self.seed
        other.name = self.name
        other._s = list(self._s)
        return other

    def u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.u64() >> 11) * (2.0 ** -53)

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def exponential(self, rate: float) -> float:
        if rate <= 0:
            raise ValueError("rate must be positive")
        # 1 - u lies in (0, 1], so the log is always defined
        return -math.log(1.0 - self.random()) / rate

    def normal(self, mu: float, sigma: float) -> float:
        # Box-Muller; one deterministic draw per call (the paired variate
        # is discarded so the uniform consumption rate stays fixed).
        u1 = self.random()
        u2 = self.random()
        if u1 <= 0.0:
            u1 = 2.0 ** -53
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normal_truncated(self, mu: float, sigma: float) -> float:
        """Normal conditioned on being > 0 (rejection sampling)."""
        for _ in range(10000):
            x = self.normal(mu, sigma)
            if x > 0.0:
                return x
        raise ValueError(f"normal({mu}, {sigma}) truncated at 0 failed to produce a positive draw")

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n). Unbiased via rejection on the top range."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            x = self.u64()
            if x < limit:
                return x % n

    def randint(self, a: int, b: int) -> int:
        """Uniform integer in [a, b] inclusive."""
        return a + self.randrange(b - a + 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.randrange(len(seq))]

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randrange(i + 1)
            seq[i], seq[j] = seq[j], seq[i]


def stream_bundle(seed: int, names: list[str]) -> dict[str, RngStream]:
    """One named stream per concern, all derived from one seed."""
    return {name: RngStream(seed, name) for name in names}
