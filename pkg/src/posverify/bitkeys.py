"""One-time key material and Hamming-distance authentication.

Bit strings are serialised as ASCII ``'0'``/``'1'`` with bit 1 first.
Key blocks come from numpy's PCG64 generator seeded with ``(seed, i)``,
so a block is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, ProtocolError, UsageError

KEY_PRNG = "numpy.PCG64"

GammaLike = Union[float, Fraction, int]


@dataclass(frozen=True)
class BitString:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise UsageError("bit strings may only contain 0 and 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        if any(ch not in "01" for ch in text):
            raise UsageError(f"not a bit string: {text!r}")
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def from_array(cls, arr: Iterable[int]) -> "BitString":
        return cls(tuple(int(b) for b in arr))

    @property
    def length(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def flipped(self, positions: Iterable[int]) -> "BitString":
        """Copy with the bits at the given 0-based positions inverted."""
        bits = list(self.bits)
        for p in positions:
            bits[p] ^= 1
        return BitString(tuple(bits))


@dataclass(frozen=True)
class RoundKey:
    """Key for one round: ``query_part`` is empty for scheme-2 blocks."""

    query_part: BitString
    reply_part: BitString
    j: int

    @property
    def n(self) -> int:
        return len(self.query_part) + len(self.reply_part)

    @property
    def m(self) -> int:
        return len(self.query_part)


@dataclass(frozen=True)
class KeyBlock:
    verifier_index: int
    round_keys: tuple[RoundKey, ...]
    n: int
    m: int
    scheme: int = 1

    def __post_init__(self):
        for expected_j, key in enumerate(self.round_keys, start=1):
            if key.j != expected_j:
                raise ConfigurationError("round keys must be numbered 1..N in order")
            if key.n != self.n or key.m != self.m:
                raise ConfigurationError("all round keys in a block share (n, m)")

    @property
    def N(self) -> int:
        return len(self.round_keys)

    def round(self, j: int) -> RoundKey:
        if not 1 <= j <= self.N:
            raise ProtocolError(
                f"key block for verifier {self.verifier_index} has {self.N} rounds; "
                f"round {j} requested"
            )
        return self.round_keys[j - 1]


def check_split(n: int, m: int, scheme: int = 1) -> None:
    if scheme not in (1, 2):
        raise ConfigurationError(f"scheme must be 1 or 2, got {scheme}")
    if scheme == 2:
        if n < 1:
            raise ConfigurationError(f"scheme 2 needs n >= 1, got n={n}")
        return
    if not 1 <= m <= n - 1:
        raise ConfigurationError(f"invalid split: need 1 <= m <= n-1, got n={n}, m={m}")


def generate_key_block(seed: int, i: int, N: int, n: int, m: int, scheme: int = 1) -> KeyBlock:
    """Pre-shared key block ``k_i`` for verifier ``i``.

    Scheme-2 blocks carry only ``n``-bit reply strings, so ``m`` is ignored
    and recorded as 0.
    """
    if N < 1:
        raise ConfigurationError(f"need at least one round, got N={N}")
    check_split(n, m, scheme)
    if scheme == 2:
        m = 0
    rng = np.random.default_rng([seed, i])
    bits = rng.integers(0, 2, size=(N, n), dtype=np.uint8)
    keys = tuple(
        RoundKey(BitString.from_array(row[:m]), BitString.from_array(row[m:]), j)
        for j, row in enumerate(bits, start=1)
    )
    return KeyBlock(verifier_index=i, round_keys=keys, n=n, m=m, scheme=scheme)


def with_bit_errors(block: KeyBlock, flip_prob: float, seed: int) -> KeyBlock:
    """Copy of ``block`` with each bit flipped independently with ``flip_prob``.

    Models imperfect key reconciliation on the prover's side.
    """
    if not 0.0 <= flip_prob <= 1.0:
        raise ConfigurationError(f"flip probability must lie in [0, 1], got {flip_prob}")
    if flip_prob == 0.0:
        return block
    rng = np.random.default_rng([seed, block.verifier_index, 0x5EC])
    keys = []
    for key in block.round_keys:
        full = np.array(key.query_part.bits + key.reply_part.bits, dtype=np.uint8)
        full ^= (rng.random(full.size) < flip_prob).astype(np.uint8)
        keys.append(
            RoundKey(
                BitString.from_array(full[: block.m]),
                BitString.from_array(full[block.m :]),
                key.j,
            )
        )
    return KeyBlock(block.verifier_index, tuple(keys), block.n, block.m, block.scheme)


def hamming_distance(a: BitString, b: BitString) -> int:
    if len(a) != len(b):
        raise UsageError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(x != y for x, y in zip(a.bits, b.bits))


def as_fraction(gamma: GammaLike) -> Fraction:
    # str() keeps the decimal the caller wrote: 0.29 -> 29/100, not 0.28999...
    if isinstance(gamma, Fraction):
        return gamma
    return Fraction(str(gamma)) if isinstance(gamma, float) else Fraction(gamma)


def tolerance_threshold(length: int, gamma: GammaLike) -> int:
    """Largest accepted Hamming distance, ``floor(gamma * length)``."""
    g = as_fraction(gamma)
    if not 0 <= g < 1:
        raise UsageError(f"gamma must satisfy 0 <= gamma < 1, got {gamma}")
    return math.floor(g * length)


def within_tolerance(received: BitString, expected: BitString, gamma: GammaLike) -> bool:
    return hamming_distance(received, expected) <= tolerance_threshold(len(expected), gamma)


# SplitMix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def seeded_bits(seeds: Union[int, Sequence[int], np.ndarray], nbits: int) -> np.ndarray:
    """Independent uniform bits for each seed, shape ``(len(seeds), nbits)``.

    Counter-based SplitMix64 stream keyed by the seed, so row ``k`` depends
    only on ``seeds[k]``. Used where one vectorised pass must reproduce many
    individually seeded trials.
    """
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    nwords = max(1, -(-nbits // 64))
    with np.errstate(over="ignore"):
        key = _mix64(seeds ^ np.uint64(0xD1B54A32D192ED03))
        counters = (np.arange(1, nwords + 1, dtype=np.uint64) * _GOLDEN)[None, :]
        words = _mix64(key[:, None] + counters)
    as_bytes = words.astype("<u8").view(np.uint8).reshape(len(seeds), nwords * 8)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :nbits]
