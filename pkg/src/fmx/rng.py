"""Deterministic random number generation.

All randomness in the package flows through the xoshiro256** generator
seeded via splitmix64, implemented here in pure integer arithmetic so that
a fixed seed produces byte-identical results on every platform.  No OS or
interpreter randomness is consulted anywhere.

The exact algorithms (documented in docs/formats.md):

* splitmix64: state advances by the golden-ratio increment, output is the
  murmur-style 30/27/31 shift-multiply finalizer.
* xoshiro256**: the four 64-bit words of state are the first four
  splitmix64 outputs of the seed; ``next64`` is the rotl(s1*5,7)*9 variant.
* bounded draws use rejection below the largest multiple of ``n`` so they
  are unbiased for every ``n``.
"""

from __future__ import annotations

from .errors import ParameterRangeError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 output finalizer (a 64-bit bijection)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _splitmix64_next(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK64
    return state, _mix64(state)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(seed: int, *path: int) -> int:
    """Fold integer path components into a new 64-bit seed.

    Used to split one global seed into independent substreams, e.g.
    ``derive_seed(seed, pair_index)`` per sample and
    ``derive_seed(pair_seed, direction)`` per mixing direction.  Each
    component passes through the splitmix64 finalizer, so distinct paths
    give uncorrelated seeds and the derivation is identical everywhere.
    """
    state = seed & _MASK64
    for component in path:
        state, out = _splitmix64_next(state)
        state = _mix64(out ^ _mix64(component & _MASK64))
    return state


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 seeding; the package-wide PRNG."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, word = _splitmix64_next(state)
            s.append(word)
        if not any(s):  # all-zero state is the one forbidden fixed point
            s[0] = _GOLDEN
        self._s = s

    def next64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ParameterRangeError(f"bound must be positive, got {n}")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next64()
            if v < threshold:
                return v % n

    def sample_without_replacement(self, population: list[int], k: int) -> list[int]:
        """Draw k distinct items via a partial Fisher-Yates shuffle."""
        if not 0 <= k <= len(population):
            raise ParameterRangeError(
                f"sample size {k} outside [0, {len(population)}]"
            )
        items = list(population)
        for i in range(k):
            j = i + self.below(len(items) - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
