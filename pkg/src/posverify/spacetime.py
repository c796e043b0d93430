"""Positions, signal propagation, clocks and the closed-form timing figures.

Units are SI throughout: metres, seconds, m/s. The simulator keeps time as
integer picoseconds; ``to_ps``/``to_seconds`` convert at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, UsageError

SPEED_OF_LIGHT = 299_792_458.0
SPEED_OF_SOUND = 343.0
PS_PER_SECOND = 10**12


def to_ps(seconds: float) -> int:
    return int(round(seconds * PS_PER_SECOND))


def to_seconds(ps: int) -> float:
    return ps / PS_PER_SECOND


@dataclass(frozen=True)
class Position:
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(x) for x in np.atleast_1d(self.coords))
        if not 1 <= len(coords) <= 3:
            raise UsageError(f"positions have 1 to 3 coordinates, got {len(coords)}")
        if not all(math.isfinite(x) for x in coords):
            raise UsageError(f"non-finite coordinate in {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    def distance(self, other: "Position") -> float:
        if self.dim != other.dim:
            raise UsageError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return math.dist(self.coords, other.coords)

    def moved(self, displacement: Sequence[float]) -> "Position":
        return Position(tuple(a + float(b) for a, b in zip(self.coords, displacement)))

    def __str__(self) -> str:
        return "(" + ", ".join(f"{x:.6g}" for x in self.coords) + ")"


def propagation_time(a: Position, b: Position, speed: float = SPEED_OF_LIGHT) -> float:
    if speed <= 0:
        raise UsageError(f"signal speed must be positive, got {speed}")
    return a.distance(b) / speed


def propagation_ps(distance: float, speed: float = SPEED_OF_LIGHT) -> int:
    """Travel time over ``distance`` rounded *up* to the next picosecond."""
    return math.ceil(distance / speed * PS_PER_SECOND)


@dataclass(frozen=True)
class ClockModel:
    """Affine clock: ``reading(t) = t + offset + drift * (t - reference_epoch)``."""

    offset: float = 0.0
    drift: float = 0.0
    reference_epoch: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(x) for x in (self.offset, self.drift, self.reference_epoch)):
            raise ConfigurationError("clock parameters must be finite")
        if self.drift <= -1.0:
            raise ConfigurationError("drift <= -1 would make the clock stop or run backwards")

    def reading(self, true_time: float) -> float:
        return true_time + self.offset + self.drift * (true_time - self.reference_epoch)

    def true_time(self, reading: float) -> float:
        return (reading - self.offset + self.drift * self.reference_epoch) / (1.0 + self.drift)

    def composed(self, other: "ClockModel") -> "ClockModel":
        """Clock whose error is the sum of both errors (epochs must agree)."""
        if other.reference_epoch != self.reference_epoch and other.drift and self.drift:
            raise ConfigurationError("cannot compose drifting clocks with different epochs")
        epoch = self.reference_epoch if self.drift else other.reference_epoch
        return ClockModel(self.offset + other.offset, self.drift + other.drift, epoch)

    # integer picosecond interface used by the event loop
    def reading_ps(self, t_ps: int) -> int:
        epoch_ps = to_ps(self.reference_epoch)
        return t_ps + to_ps(self.offset) + int(round(self.drift * (t_ps - epoch_ps)))

    def true_ps(self, reading_ps: int) -> int:
        """Earliest true picosecond at which the clock shows ``reading_ps`` or later."""
        t = to_ps(self.true_time(to_seconds(reading_ps)))
        while self.reading_ps(t) < reading_ps:
            t += 1
        while self.reading_ps(t - 1) >= reading_ps:
            t -= 1
        return t


def clock_reading(model: ClockModel, true_time: float) -> float:
    return model.reading(true_time)


def clock_true_time(model: ClockModel, reading: float) -> float:
    return model.true_time(reading)


@dataclass(frozen=True)
class ResyncingClock:
    """A perturbed clock that is re-zeroed against the frame every ``period`` seconds.

    Before the first resync it follows ``model``; after the k-th resync at
    ``k * period`` (measured from ``start``) the offset is gone and only the
    drift accumulates again from that instant.
    """

    model: ClockModel
    period: float
    start: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError("resync period must be positive")

    def _segment(self, t: float) -> ClockModel:
        k = math.floor((t - self.start) / self.period)
        if k < 1:
            return self.model
        return ClockModel(0.0, self.model.drift, self.start + k * self.period)

    def reading(self, true_time: float) -> float:
        return self._segment(true_time).reading(true_time)

    def reading_ps(self, t_ps: int) -> int:
        return self._segment(to_seconds(t_ps)).reading_ps(t_ps)

    def true_ps(self, reading_ps: int) -> int:
        # readings jump at resync instants; search segments in order
        t = self.model.true_ps(reading_ps)
        for _ in range(10_000):
            seg = self._segment(to_seconds(t))
            cand = seg.true_ps(reading_ps)
            if self._segment(to_seconds(cand)) == seg:
                return cand
            t = cand if cand > t else to_ps(seg.reference_epoch + self.period)
        raise ConfigurationError("could not invert resyncing clock")


@dataclass(frozen=True)
class DelayProfile:
    """Processing delays in seconds.

    delta1: prover authenticates a query; delta2: prover transmits;
    delta3: verifier authenticates a reply; delta4: verifier generates and
    sends its confirmation; delta5: confirmations reach the master and are
    combined; delta2_uncertainty: spread of the prover's transmit time.
    """

    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 0.0
    delta4: float = 0.0
    delta5: float = 0.0
    delta2_uncertainty: float = 0.0

    def __post_init__(self):
        for name in ("delta1", "delta2", "delta3", "delta4", "delta5", "delta2_uncertainty"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and non-negative, got {v}")


def timing_ball_uncertainty(profile: DelayProfile, speed: float = SPEED_OF_LIGHT) -> float:
    """``c * (delta1 + delta2)``: spread of a verifier's distance estimate."""
    return speed * (profile.delta1 + profile.delta2)


def scheme1_uncertainty(profile: DelayProfile, speed: float = SPEED_OF_LIGHT) -> float:
    """Position uncertainty once the master has heard back, ``c * (delta1+...+delta4)``."""
    return speed * (profile.delta1 + profile.delta2 + profile.delta3 + profile.delta4)


def scheme2_uncertainty(
    delta_d_bound: float, delta2_uncertainty: float, delta3: float, speed: float = SPEED_OF_LIGHT
) -> float:
    for v in (delta_d_bound, delta2_uncertainty, delta3):
        if v < 0:
            raise UsageError("delays must be non-negative")
    return speed * (delta_d_bound + delta2_uncertainty + delta3)


def movement_bound(round_period: float, max_speed: float = SPEED_OF_LIGHT) -> float:
    """Farthest the prover can travel between two consecutive checks."""
    if round_period <= 0 or max_speed <= 0:
        raise UsageError("round period and speed must be positive")
    return max_speed * round_period


@dataclass(frozen=True)
class Trajectory:
    """Prover motion: parked at ``origin`` until ``legs`` start moving it.

    Each leg is ``(start, duration, velocity)``; legs are applied in order
    and contribute ``velocity * clip(t - start, 0, duration)``.
    """

    origin: Position
    legs: tuple[tuple[float, float, tuple[float, ...]], ...] = field(default_factory=tuple)

    def at(self, t: float) -> Position:
        if not self.legs:
            return self.origin
        disp = np.zeros(self.origin.dim)
        for start, duration, velocity in self.legs:
            dt = min(max(t - start, 0.0), duration)
            disp += dt * np.asarray(velocity)
        return self.origin.moved(disp)

    def max_speed(self) -> float:
        return max((float(np.linalg.norm(v)) for _, _, v in self.legs), default=0.0)

    def with_leg(self, start: float, duration: float, velocity: Sequence[float]) -> "Trajectory":
        v = tuple(float(x) for x in velocity)
        if len(v) != self.origin.dim:
            raise ConfigurationError("velocity dimension does not match positions")
        return Trajectory(self.origin, self.legs + ((float(start), float(duration), v),))
