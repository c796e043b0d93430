"""Spoofer strategies: impersonation, delay/jam, clock attacks, relocation.

Strategies act through an ``AdversaryContext`` supplied by the simulator.
The context exposes wire messages, public scenario data and physical
levers (trajectory, clocks), but never the agents' key blocks.
"""

from __future__ import annotations

import fnmatch
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .bitkeys import (
    BitString,
    KeyBlock,
    RoundKey,
    check_split,
    seeded_bits,
    tolerance_threshold,
)
from .errors import ConfigurationError
from .protocol import ADDRESSEE_ONLY, Prover, Query, Reply, Schedule, Verifier
from .spacetime import (
    SPEED_OF_LIGHT,
    ClockModel,
    Position,
    ResyncingClock,
    Trajectory,
    movement_bound,
    to_ps,
)

A_TO_B = ("A*->B", "B->A*")


@dataclass(frozen=True)
class ChannelTap:
    """Access to the channels whose ``"src->dst"`` names match ``channels`` (fnmatch patterns)."""

    channels: tuple[str, ...] = ("*",)
    capabilities: frozenset = frozenset({"read", "delay", "drop", "inject"})

    def matches(self, channel: str) -> bool:
        return any(fnmatch.fnmatchcase(channel, pat) for pat in self.channels)


class AdversaryContext(Protocol):
    """What the simulator lets a strategy see and do."""

    rng: np.random.Generator
    public: dict
    scheme: int

    def now_ps(self) -> int: ...
    def set_timer(self, t_ps: int, strategy: "Strategy", tag) -> None: ...
    def inject(self, msg, dest: str, deliver_ps: int) -> None: ...
    def trajectory(self) -> Trajectory: ...
    def set_trajectory(self, trajectory: Trajectory) -> None: ...
    def perturb_verifier_clock(self, i: int, clock) -> None: ...
    def perturb_prover_clock(self, clock: ClockModel) -> None: ...
    def schedule_view(self) -> Optional[dict]: ...


class UniformGuess:
    """Each guessed bit is a fair coin."""

    name = "uniform"

    def guess(self, rng: np.random.Generator, length: int) -> BitString:
        return BitString.from_array(rng.integers(0, 2, size=length))


@dataclass
class BiasedGuess:
    p_one: float = 0.5
    name = "biased"

    def guess(self, rng: np.random.Generator, length: int) -> BitString:
        return BitString.from_array((rng.random(length) < self.p_one).astype(int))


def make_policy(spec) -> UniformGuess | BiasedGuess:
    if spec in (None, "uniform"):
        return UniformGuess()
    if isinstance(spec, dict) and spec.get("type") == "biased":
        p = float(spec.get("p_one", 0.5))
        if not 0 <= p <= 1:
            raise ConfigurationError("biased guess policy needs 0 <= p_one <= 1")
        return BiasedGuess(p)
    raise ConfigurationError(f"unknown guess policy {spec!r}")


class Strategy:
    """Base class. Subclasses override the hooks they need."""

    kind = "strategy"
    params: dict

    def configure(self, ctx: AdversaryContext) -> None:
        pass

    def intercept(self, ctx: AdversaryContext, msg, channel: str) -> Optional[float]:
        """Extra delay in seconds for a message in flight, or None to drop it."""
        return 0.0

    def on_timer(self, ctx: AdversaryContext, tag) -> None:
        pass

    def notes(self) -> dict:
        return {}


@dataclass
class Delay(Strategy):
    seconds: float
    tap: ChannelTap = ChannelTap(A_TO_B)
    params: dict = field(default_factory=dict)
    kind = "delay"

    def __post_init__(self):
        if self.seconds < 0:
            raise ConfigurationError("added delay must be non-negative")

    def intercept(self, ctx, msg, channel):
        return self.seconds if self.tap.matches(channel) else 0.0


@dataclass
class Jam(Strategy):
    tap: ChannelTap = ChannelTap(("*",))
    params: dict = field(default_factory=dict)
    kind = "jam"

    def intercept(self, ctx, msg, channel):
        return None if self.tap.matches(channel) else 0.0


def apply_delay_attack(tap: ChannelTap, added: float) -> Delay:
    """Channel action that holds back every message on ``tap`` by ``added`` seconds."""
    return Delay(added, tap, {"type": "delay", "seconds": added, "channels": list(tap.channels)})


@dataclass
class DesyncAlice(Strategy):
    """Shifts one verifier's clock; optional periodic re-zeroing models clock redistribution."""

    agent: int
    offset: float = 0.0
    drift: float = 0.0
    resync_period: Optional[float] = None
    params: dict = field(default_factory=dict)
    kind = "desync_alice"

    def configure(self, ctx):
        clock = ClockModel(self.offset, self.drift, 0.0)
        if self.resync_period:
            clock = ResyncingClock(clock, self.resync_period)
        ctx.perturb_verifier_clock(self.agent, clock)


@dataclass
class DesyncBob(Strategy):
    """Sets B's clock back by ``offset`` seconds (and slows it by ``drift``),
    so every scheduled reply completes ``offset`` seconds late."""

    offset: float = 0.0
    drift: float = 0.0
    params: dict = field(default_factory=dict)
    kind = "desync_bob"

    def configure(self, ctx):
        ctx.perturb_prover_clock(ClockModel(-self.offset, -self.drift, 0.0))


@dataclass
class Relocate(Strategy):
    start_time: float
    velocity: tuple[float, ...]
    duration: float = math.inf
    speed_cap: float = SPEED_OF_LIGHT
    params: dict = field(default_factory=dict)
    kind = "relocate"

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def configure(self, ctx):
        ctx.set_trajectory(apply_relocation(self, ctx.trajectory()))


def apply_relocation(strategy: Relocate, trajectory: Trajectory) -> Trajectory:
    if strategy.speed_cap > SPEED_OF_LIGHT:
        raise ConfigurationError("speed cap cannot exceed the speed of light")
    if strategy.speed > strategy.speed_cap:
        raise ConfigurationError(
            f"relocation speed {strategy.speed:.6g} m/s exceeds the cap {strategy.speed_cap:.6g} m/s"
        )
    if strategy.duration < 0:
        raise ConfigurationError("relocation duration must be non-negative")
    return trajectory.with_leg(strategy.start_time, strategy.duration, strategy.velocity)


def schedule_exploit_window(schedule: Schedule | dict, max_speed: float) -> Optional[list[float]]:
    """Largest undetected displacement in each gap between checks, or None
    when the schedule is encrypted and the gaps are unknown to the spoofer."""
    view = schedule.adversary_view() if isinstance(schedule, Schedule) else schedule
    if view.get("encrypted"):
        return None
    times = view["times"]
    return [movement_bound(b - a, max_speed) for a, b in zip(times, times[1:])]


@dataclass
class ScheduleExploit(Strategy):
    """Reads a plaintext schedule and moves B out and back inside the longest gap."""

    max_speed: float = 343.0
    margin: float = 0.0
    direction: Optional[tuple[float, ...]] = None
    params: dict = field(default_factory=dict)
    kind = "schedule_exploit"
    windows: Optional[list[float]] = None
    excursion: float = 0.0

    def configure(self, ctx):
        if ctx.scheme != 2:
            raise ConfigurationError("schedule exploitation needs a scheme-2 schedule")
        if self.max_speed > SPEED_OF_LIGHT:
            raise ConfigurationError("max_speed cannot exceed the speed of light")
        view = ctx.schedule_view()
        self.windows = schedule_exploit_window(view, self.max_speed) if view else None
        if not self.windows:
            return
        times = view["times"]
        k = int(np.argmax(np.diff(times)))
        usable = times[k + 1] - times[k] - 2 * self.margin
        if usable <= 0:
            return
        traj = ctx.trajectory()
        d = np.asarray(self.direction if self.direction else np.eye(traj.origin.dim)[0], float)
        v = d / np.linalg.norm(d) * self.max_speed
        half = usable / 2
        start = times[k] + self.margin
        traj = traj.with_leg(start, half, v).with_leg(start + half, half, -v)
        ctx.set_trajectory(traj)
        self.excursion = self.max_speed * half

    def notes(self):
        return {"windows": self.windows, "excursion": self.excursion}


@dataclass
class Impersonate(Strategy):
    """Guess the query to learn the reply; otherwise guess the reply.

    For each target verifier, S sends B a forged ``Query i j`` ahead of the
    honest one. A reply from B is captured and withheld; at the honest
    arrival time S hands A_i either the captured string or a fresh guess.
    """

    targets: tuple[int, ...] = (1,)
    round: int = 1
    policy: object = field(default_factory=UniformGuess)
    lead: Optional[float] = None
    params: dict = field(default_factory=dict)
    kind = "impersonate"

    def __post_init__(self):
        self.captured: dict[int, BitString] = {}

    def configure(self, ctx):
        pub = ctx.public
        rounds = pub["rounds"]
        j = self.round
        if not 1 <= j <= len(rounds):
            raise ConfigurationError(f"impersonation round {j} is not in the schedule")
        T = rounds[j - 1]
        lead = self.lead
        if lead is None:
            lead = 1e-6 if j == 1 else min(1e-6, (T - rounds[j - 2]) / 2)
        for i in self.targets:
            if not 1 <= i <= pub["M"]:
                raise ConfigurationError(f"impersonation target {i} is not a verifier")
            if ctx.scheme == 1:
                q = self.policy.guess(ctx.rng, pub["m"])
                ctx.inject(Query(i, j, q, source="S", dest="B"), "B", to_ps(T - lead))
            ctx.set_timer(to_ps(T) + pub["honest_delay_ps"][i], self, ("reply", i))

    def intercept(self, ctx, msg, channel):
        if isinstance(msg, Reply) and msg.source == "B" and msg.j == self.round and msg.i in self.targets:
            self.captured.setdefault(msg.i, msg.r)
            return None
        return 0.0

    def on_timer(self, ctx, tag):
        _, i = tag
        # in scheme 2 there is no query to steal with, so S always guesses
        r = self.captured.get(i) if ctx.scheme == 1 else None
        if r is None:
            r = self.policy.guess(ctx.rng, ctx.public["reply_bits"])
        ctx.inject(Reply(i, self.round, r, source="S", dest=f"A{i}"), f"A{i}", ctx.now_ps())

    def notes(self):
        return {"captured_reply_for": sorted(self.captured)}


def impersonation_outcome(
    key: Sequence[int], q_guess: Sequence[int], r_guess: Sequence[int], gamma
) -> bool:
    """Play one impersonation attempt through the real prover and verifier state machines."""
    m = len(q_guess)
    n = len(key)
    block = KeyBlock(
        1, (RoundKey(BitString.from_array(key[:m]), BitString.from_array(key[m:]), 1),), n, m
    )
    prover = Prover({1: block}, gamma, reply_mode=ADDRESSEE_ONLY)
    verifier = Verifier(1, Position((0.0,)), block, gamma, expected_distance=0.0, tolerance=0.0)
    T = 1_000
    stolen = prover.handle_query(Query(1, 1, BitString.from_array(q_guess), source="S"), 0)
    honest = verifier.emit_query(1, T)
    assert prover.handle_query(honest, T) is None  # key spent or B locked out
    r = stolen.r if stolen is not None else BitString.from_array(r_guess)
    confirm = verifier.handle_reply(Reply(1, 1, r, source="S", dest="A1"), T)
    return confirm.s == 1


def _trial_bits(n: int, m: int, seeds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    bits = seeded_bits(seeds, 2 * n)
    return bits[:, :n], bits[:, n : n + m], bits[:, n + m :]


def run_impersonation_trial(n: int, m: int, gamma, seed: int) -> bool:
    """One seeded attempt: key and both guesses are drawn from ``seed``."""
    check_split(n, m)
    key, qg, rg = (x[0] for x in _trial_bits(n, m, seed))
    return impersonation_outcome(key.tolist(), qg.tolist(), rg.tolist(), gamma)


def impersonation_batch(n: int, m: int, gamma, seeds) -> np.ndarray:
    """Vectorised ``run_impersonation_trial`` over many seeds (same outcomes, same seeds)."""
    check_split(n, m)
    seeds = np.asarray(seeds, dtype=np.uint64)
    out = np.empty(len(seeds), dtype=bool)
    tq, tr = tolerance_threshold(m, gamma), tolerance_threshold(n - m, gamma)
    step = 1 << 18
    for s in range(0, len(seeds), step):
        key, qg, rg = _trial_bits(n, m, seeds[s : s + step])
        dq = np.count_nonzero(key[:, :m] != qg, axis=1)
        dr = np.count_nonzero(key[:, m:] != rg, axis=1)
        out[s : s + step] = (dq <= tq) | (dr <= tr)
    return out


def build_strategy(spec: dict) -> Strategy:
    """Strategy object from its scenario-file description."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigurationError(f"adversary entries need a 'type': {spec!r}")
    kind = spec["type"]
    p = dict(spec)
    try:
        if kind == "delay":
            return Delay(float(p["seconds"]), ChannelTap(tuple(p.get("channels", A_TO_B))), spec)
        if kind == "jam":
            return Jam(ChannelTap(tuple(p.get("channels", ("*",)))), spec)
        if kind == "desync_alice":
            return DesyncAlice(int(p["agent"]), float(p.get("offset", 0)), float(p.get("drift", 0)),
                               p.get("resync_period"), spec)
        if kind == "desync_bob":
            return DesyncBob(float(p.get("offset", 0)), float(p.get("drift", 0)), spec)
        if kind == "relocate":
            return Relocate(float(p["start_time"]), tuple(float(v) for v in p["velocity"]),
                            float(p.get("duration", math.inf)),
                            float(p.get("speed_cap", SPEED_OF_LIGHT)), spec)
        if kind == "schedule_exploit":
            direction = p.get("direction")
            return ScheduleExploit(float(p.get("max_speed", 343.0)), float(p.get("margin", 0.0)),
                                   tuple(direction) if direction else None, spec)
        if kind == "impersonate":
            return Impersonate(tuple(int(t) for t in p.get("targets", [1])), int(p.get("round", 1)),
                               make_policy(p.get("policy")), p.get("lead_seconds"), spec)
    except KeyError as exc:
        raise ConfigurationError(f"adversary {kind!r} is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"adversary {kind!r}: {exc}") from None
    raise ConfigurationError(f"unknown adversary type {kind!r}")
