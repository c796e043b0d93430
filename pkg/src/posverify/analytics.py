"""Closed-form spoofing probabilities and key-consumption arithmetic.

All probabilities are exact ``Fraction`` values; convert with ``float()``
when needed. Fractions never underflow, so the same code serves any n.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .bitkeys import GammaLike, as_fraction, check_split, tolerance_threshold
from .errors import UsageError


class ApproximationWarning(UserWarning):
    """The small-t approximation was evaluated outside its useful range."""


@dataclass(frozen=True)
class SecurityParams:
    n: int
    m: int
    gamma: Fraction = Fraction(0)

    def __post_init__(self):
        check_split(self.n, self.m)
        g = as_fraction(self.gamma)
        if not 0 <= g < 1:
            raise UsageError(f"gamma must satisfy 0 <= gamma < 1, got {self.gamma}")
        object.__setattr__(self, "gamma", g)

    @property
    def t(self) -> int:
        return math.floor(self.gamma * Fraction(self.n, 2))


def hamming_ball_volume(length: int, radius: int) -> int:
    """Number of strings of ``length`` bits within Hamming distance ``radius`` of a fixed one."""
    return sum(math.comb(length, k) for k in range(0, min(radius, length) + 1))


def p_eve(n: int, m: int) -> Fraction:
    """Success chance of the guess-query-then-guess-reply attack with no error tolerance."""
    check_split(n, m)
    pq = Fraction(1, 2**m)
    return pq + (1 - pq) * Fraction(1, 2 ** (n - m))


def p_s_optimal(n: int) -> Fraction:
    """``p_eve`` at the best split m = n/2: ``2 * 2**(-n/2) - 2**(-n)``."""
    if n < 2 or n % 2:
        raise UsageError(f"n must be even and at least 2, got {n}")
    return 2 * Fraction(1, 2 ** (n // 2)) - Fraction(1, 2**n)


def p_s_error_tolerant_approx(n: int, gamma: GammaLike, guard: float = 0.25) -> Fraction:
    """Small-tolerance estimate ``2**(1 - n/2) * C(n/2, t)`` with ``t = floor(gamma*n/2)``.

    Warns with ApproximationWarning when ``t > guard * n``.
    """
    if n < 2 or n % 2:
        raise UsageError(f"n must be even and at least 2, got {n}")
    half = n // 2
    t = tolerance_threshold(half, gamma)
    if t > guard * n:
        warnings.warn(
            f"t={t} exceeds {guard}*n; the approximation assumes small t", ApproximationWarning
        )
    return Fraction(2 * math.comb(half, t), 2**half)


def p_s_error_tolerant_exact(n: int, m: int, gamma: GammaLike) -> Fraction:
    """Exact success chance of the two-phase attack when both sides accept
    up to ``floor(gamma * length)`` bit errors."""
    check_split(n, m)
    r = n - m
    pq = Fraction(hamming_ball_volume(m, tolerance_threshold(m, gamma)), 2**m)
    pr = Fraction(hamming_ball_volume(r, tolerance_threshold(r, gamma)), 2**r)
    return pq + (1 - pq) * pr


def p_reply_guess(n: int, gamma: GammaLike) -> Fraction:
    """Chance that a uniformly random n-bit reply passes the tolerance check (scheme 2)."""
    if n < 1:
        raise UsageError("n must be positive")
    return Fraction(hamming_ball_volume(n, tolerance_threshold(n, gamma)), 2**n)


def optimal_split(n: int) -> int:
    """Split m in 1..n-1 minimising ``p_eve(n, m)`` (smallest m on ties)."""
    if n < 2:
        raise UsageError("n must be at least 2")
    return min(range(1, n), key=lambda m: (p_eve(n, m), m))


def key_consumption(M: int, bits_per_round: float, round_rate: float) -> float:
    """Key bits used per second by ``M`` verifiers."""
    if M <= 0 or bits_per_round <= 0 or round_rate <= 0:
        raise UsageError("verifier count, bits per round and round rate must be positive")
    return M * bits_per_round * round_rate


@dataclass(frozen=True)
class SweepRow:
    n: int
    m: int
    gamma: Fraction
    t: int
    p_exact: Fraction
    p_approx: Fraction | None


def pspoof_sweep(ns, ms=None, gammas=(0,)) -> list[SweepRow]:
    """Rows of (n, m, gamma, t, p_exact, p_approx) for every combination.

    ``ms=None`` picks m = n // 2. ``p_approx`` is only defined for even n at
    m = n/2.
    """
    rows = []
    for n in ns:
        for m in ([n // 2] if ms is None else ms):
            if not 1 <= m <= n - 1:
                continue
            for gamma in gammas:
                g = as_fraction(gamma)
                params = SecurityParams(n, m, g)
                approx = None
                if n % 2 == 0 and m == n // 2:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", ApproximationWarning)
                        approx = p_s_error_tolerant_approx(n, g)
                rows.append(SweepRow(n, m, g, params.t, p_s_error_tolerant_exact(n, m, g), approx))
    return rows
