"""Independent reference computations used to freeze expected values.

Nothing here imports the package: every quantity is recomputed by brute
force or from first principles.
"""

import math
from fractions import Fraction

import numpy as np

C = 299_792_458.0


def _hamming_table(length: int) -> np.ndarray:
    codes = np.arange(2**length)
    x = codes[:, None] ^ codes[None, :]
    return np.array([[bin(int(v)).count("1") for v in row] for row in x])


def enumerate_impersonation(n: int, m: int, gamma: Fraction) -> Fraction:
    """Success fraction of guess-query-then-guess-reply over every key and every guess pair."""
    g = Fraction(gamma)
    tq = math.floor(g * m)
    tr = math.floor(g * (n - m))
    query_ok = _hamming_table(m) <= tq  # [true q, guessed q]
    reply_ok = _hamming_table(n - m) <= tr  # [true r, guessed r]
    wins = query_ok[:, :, None, None] | reply_ok[None, None, :, :]
    return Fraction(int(wins.sum()), 2 ** (2 * n))


def enumerate_reply_guess(n: int, gamma: Fraction) -> Fraction:
    t = math.floor(Fraction(gamma) * n)
    ok = _hamming_table(n) <= t
    return Fraction(int(ok.sum()), 4**n)


def interval_intersection(intervals):
    lo = max(a for a, _ in intervals)
    hi = min(b for _, b in intervals)
    return None if lo > hi else (lo, hi)


def sampled_diameter(centers, radii, samples: int = 40_000, seed: int = 0) -> float:
    """Lower estimate of a ball intersection's diameter from random points plus boundary hits."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, float)
    radii = np.asarray(radii, float)
    s = int(np.argmin(radii))
    d = centers.shape[1]
    pts = rng.normal(size=(samples, d))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= rng.random((samples, 1)) ** (1 / d)
    pts = centers[s] + radii[s] * pts
    inside = np.all(np.linalg.norm(pts[:, None, :] - centers[None], axis=2) <= radii, axis=1)
    pts = pts[inside]
    if len(pts) < 2:
        return 0.0
    best = 0.0
    for k in range(0, len(pts), 2000):
        diff = pts[k : k + 2000, None, :] - pts[None, :, :]
        best = max(best, float(np.sqrt((diff**2).sum(axis=2)).max()))
    return best


def lens_diameter(r1: float, r2: float, D: float, samples: int = 4001) -> float:
    """Diameter of the intersection of two balls (any dimension >= 2) whose
    centres are ``D`` apart, by dense search along the symmetry axis.

    Two cross-sections at axial positions x1, x2 with radii p1, p2 are at
    most sqrt((x1-x2)^2 + (p1+p2)^2) apart, attained on opposite sides.
    """
    lo, hi = max(-r1, D - r2), min(r1, D + r2)
    if lo > hi:
        return None
    x = np.linspace(lo, hi, samples)
    rho = np.sqrt(np.clip(np.minimum(r1**2 - x**2, r2**2 - (x - D) ** 2), 0, None))
    dx = x[:, None] - x[None, :]
    return float(np.sqrt(dx**2 + (rho[:, None] + rho[None, :]) ** 2).max())
