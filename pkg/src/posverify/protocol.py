"""Message types and the verifier, prover and master state machines.

Every state machine takes and returns times as integer picoseconds on its
*own* clock; the simulator converts to and from the shared frame. Agents
are named ``A1..AM`` (verifiers), ``A0`` (master), ``B`` (prover) and ``S``
(adversary).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .bitkeys import BitString, KeyBlock, hamming_distance, tolerance_threshold, within_tolerance
from .errors import ConfigurationError, MeasurementRejected, ProtocolError, UsageError
from .geometry import (
    Ball,
    Region,
    ball_from_one_way,
    ball_from_timing,
    convex_hull_condition,
    effective_resolution,
    region_contains,
    region_diameter_bound,
    region_is_empty,
)
from .spacetime import (
    SPEED_OF_LIGHT,
    ClockModel,
    DelayProfile,
    Position,
    propagation_ps,
    to_ps,
    to_seconds,
)

BROADCAST = "broadcast"
ADDRESSEE_ONLY = "addressee-only"

# failure reasons surfaced in confirmations and reports
OK = "ok"
LATE = "late"
EARLY = "early"
SEQUENCING = "sequencing"
AUTH = "auth"
MISSING = "missing"
EMPTY_REGION = "empty-region"


def verifier_name(i: int) -> str:
    return f"A{i}"


def _fmt_time(seconds: float) -> str:
    return f"{seconds:.12g}"


class Message:
    """Common behaviour of wire messages. Subclasses are frozen dataclasses."""

    kind = "MESSAGE"

    @property
    def emit_time(self) -> float:
        return to_seconds(self.emit_ps)

    @property
    def channel(self) -> str:
        return f"{self.source}->{self.dest if self.dest is not None else '*'}"

    def routed(self, **changes) -> "Message":
        return dataclasses.replace(self, **changes)

    def sort_key(self) -> tuple:
        return (self.kind, self.wire())

    def log_line(self) -> str:
        return f"{_fmt_time(self.emit_time)} {self.channel} {self.wire()}"


@dataclass(frozen=True)
class Query(Message):
    i: int
    j: int
    q: BitString
    source: str = ""
    dest: Optional[str] = "B"
    emit_ps: int = 0
    kind = "QUERY"

    def wire(self) -> str:
        return f"QUERY {self.i} {self.j} {self.q}"


@dataclass(frozen=True)
class Reply(Message):
    i: int
    j: int
    r: BitString
    source: str = "B"
    dest: Optional[str] = None  # None: every verifier
    emit_ps: int = 0
    kind = "REPLY"

    def wire(self) -> str:
        return f"REPLY {self.i} {self.j} {self.r}"


@dataclass(frozen=True)
class Confirm(Message):
    i: int
    j: int
    s: int
    reason: str = OK
    ball: Optional[Ball] = None
    source: str = ""
    dest: Optional[str] = "A0"
    emit_ps: int = 0
    kind = "CONFIRM"

    def wire(self) -> str:
        return f"CONFIRM {self.i} {self.j} {self.s}"


@dataclass(frozen=True)
class Schedule(Message):
    times: tuple[float, ...]
    encrypted: bool = False
    source: str = "A0"
    dest: Optional[str] = "B"
    emit_ps: int = 0
    kind = "SCHEDULE"

    def wire(self) -> str:
        return " ".join(["SCHEDULE", str(len(self.times))] + [_fmt_time(t) for t in self.times])

    def adversary_view(self) -> dict:
        """What a wiretap learns: the times in clear, or only their count and size."""
        if self.encrypted:
            return {"encrypted": True, "count": len(self.times), "length": len(self.wire())}
        return {"encrypted": False, "times": list(self.times)}


def parse_wire(line: str) -> Message:
    """Inverse of ``Message.wire`` (routing fields are left at their defaults)."""
    parts = line.split()
    if not parts:
        raise UsageError("empty wire line")
    tag = parts[0]
    try:
        if tag == "QUERY" and len(parts) == 4:
            return Query(int(parts[1]), int(parts[2]), BitString.from_str(parts[3]))
        if tag == "REPLY" and len(parts) == 4:
            return Reply(int(parts[1]), int(parts[2]), BitString.from_str(parts[3]))
        if tag == "CONFIRM" and len(parts) == 4:
            return Confirm(int(parts[1]), int(parts[2]), int(parts[3]))
        if tag == "SCHEDULE" and len(parts) == int(parts[1]) + 2:
            return Schedule(tuple(float(t) for t in parts[2:]))
    except ValueError as exc:
        raise UsageError(f"malformed wire line {line!r}: {exc}") from None
    raise UsageError(f"malformed wire line {line!r}")


def distribute_schedule(times: Sequence[float], encrypted: bool = False) -> Schedule:
    times = tuple(float(t) for t in times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigurationError("schedule times must be strictly increasing")
    return Schedule(times, encrypted)


class Prover:
    """The tag B. Holds one key block per verifier.

    Scheme 1: answers authenticated queries and locks out for good after the
    first query that fails authentication. Scheme 2: transmits replies on a
    schedule read off its own clock.
    """

    def __init__(
        self,
        keys: dict[int, KeyBlock],
        gamma,
        delays: DelayProfile = DelayProfile(),
        reply_mode: str = BROADCAST,
        scheme: int = 1,
        clock: ClockModel = ClockModel(),
    ):
        if reply_mode not in (BROADCAST, ADDRESSEE_ONLY):
            raise ConfigurationError(f"unknown reply mode {reply_mode!r}")
        self.keys = dict(keys)
        self.gamma = gamma
        self.delays = delays
        self.reply_mode = reply_mode
        self.scheme = scheme
        self.clock = clock
        self.locked_out = False
        self.used: set[tuple[int, int]] = set()
        self.rejections: list[tuple[int, str]] = []  # (arrival_ps, reason)

    def _reject(self, arrival_ps: int, reason: str) -> None:
        self.rejections.append((arrival_ps, reason))
        self.locked_out = True

    def handle_query(self, msg: Query, arrival_ps: int) -> Optional[Reply]:
        if self.scheme != 1:
            raise UsageError("queries are only part of scheme 1")
        if self.locked_out:
            self.rejections.append((arrival_ps, "locked-out"))
            return None
        block = self.keys.get(msg.i)
        if block is None or not 1 <= msg.j <= block.N:
            self._reject(arrival_ps, "unknown round")
            return None
        key = block.round(msg.j)
        if len(msg.q) != len(key.query_part) or not within_tolerance(msg.q, key.query_part, self.gamma):
            self._reject(arrival_ps, "query failed authentication")
            return None
        if (msg.i, msg.j) in self.used:
            # the reply string was already spent; never transmit it twice
            self.rejections.append((arrival_ps, "round already answered"))
            return None
        self.used.add((msg.i, msg.j))
        dest = None if self.reply_mode == BROADCAST else verifier_name(msg.i)
        emit = arrival_ps + to_ps(self.delays.delta1) + to_ps(self.delays.delta2)
        return Reply(msg.i, msg.j, key.reply_part, source="B", dest=dest, emit_ps=emit)

    def scheduled_reply(self, schedule: Schedule, j: int, i: int, jitter_ps: int = 0) -> Reply:
        """Reply for verifier ``i`` whose transmission completes when B's clock reads ``T_j``.

        ``emit_ps`` is the completion instant in the shared frame. B starts
        sending ``delta2`` earlier; ``jitter_ps`` is the realised deviation
        from that nominal transmit time.
        """
        if self.scheme != 2:
            raise UsageError("scheduled replies are only part of scheme 2")
        if not 1 <= j <= len(schedule.times):
            raise ProtocolError(f"schedule has {len(schedule.times)} slots; round {j} requested")
        block = self.keys.get(i)
        if block is None:
            raise ProtocolError(f"no key shared with verifier {i}")
        key = block.round(j)
        if (i, j) in self.used:
            raise ProtocolError(f"reply ({i}, {j}) already transmitted")
        self.used.add((i, j))
        completion = self.clock.true_ps(to_ps(schedule.times[j - 1])) + jitter_ps
        dest = None if self.reply_mode == BROADCAST else verifier_name(i)
        return Reply(i, j, key.reply_part, source="B", dest=dest, emit_ps=completion)


@dataclass
class _OpenRound:
    j: int
    T_ps: int
    send_ps: int


class Verifier:
    """Verifier A_i: times its exchange with B and reports one confirmation per round."""

    def __init__(
        self,
        i: int,
        position: Position,
        keys: KeyBlock,
        gamma,
        expected_distance: float,
        tolerance: float,
        prover_delays: DelayProfile = DelayProfile(),
        delays: DelayProfile = DelayProfile(),
        scheme: int = 1,
        speed: float = SPEED_OF_LIGHT,
        processing_floor: float = 0.0,
        clock_sync_bound: float = 0.0,
    ):
        if tolerance < 0:
            raise ConfigurationError("timing tolerance must be non-negative")
        self.i = i
        self.name = verifier_name(i)
        self.position = position
        self.keys = keys
        self.gamma = gamma
        self.expected_distance = expected_distance
        self.tolerance_ps = to_ps(tolerance)
        self.prover_delays = prover_delays
        self.delays = delays
        self.scheme = scheme
        self.speed = speed
        self.processing_floor = processing_floor
        self.clock_sync_bound = clock_sync_bound
        self.current: Optional[_OpenRound] = None
        self.last_round = 0
        self.confirmed: list[tuple[int, int]] = []  # (j, s) in emission order
        self.ignored: list[tuple[int, str]] = []

    @property
    def one_way_ps(self) -> int:
        return propagation_ps(self.expected_distance, self.speed)

    def _start(self, j: int, T_ps: int, send_ps: int) -> None:
        if j != self.last_round + 1:
            raise ProtocolError(f"{self.name}: round {j} is not next (last was {self.last_round})")
        self.keys.round(j)  # raises on exhaustion
        self.current = _OpenRound(j, T_ps, send_ps)
        self.last_round = j

    def emit_query(self, j: int, T_ps: int) -> Query:
        """Scheme 1: send ``Query i j q_ij`` so it reaches L at ``T_ps``."""
        if self.scheme != 1:
            raise UsageError("scheme 2 verifiers send no queries")
        send = T_ps - self.one_way_ps
        self._start(j, T_ps, send)
        q = self.keys.round(j).query_part
        return Query(self.i, j, q, source=self.name, dest="B", emit_ps=send)

    def open_round(self, j: int, T_ps: int) -> None:
        """Scheme 2: start listening for the reply scheduled to complete at ``T_ps``."""
        if self.scheme != 2:
            raise UsageError("scheme 1 rounds open by sending a query")
        self._start(j, T_ps, T_ps - self.one_way_ps)

    def deadline_ps(self, T_ps: int) -> int:
        if self.scheme == 1:
            slack = to_ps(self.prover_delays.delta1) + to_ps(self.prover_delays.delta2)
        else:
            slack = to_ps(self.clock_sync_bound) + to_ps(self.prover_delays.delta2_uncertainty)
        return T_ps + self.one_way_ps + slack + self.tolerance_ps

    def _confirm(self, s: int, reason: str, at_ps: int, ball: Optional[Ball] = None) -> Confirm:
        j = self.current.j
        self.current = None
        self.confirmed.append((j, s))
        emit = at_ps + to_ps(self.delays.delta3) + to_ps(self.delays.delta4)
        return Confirm(self.i, j, s, reason, ball, source=self.name, dest="A0", emit_ps=emit)

    def _ball(self, arrival_ps: int) -> Ball:
        rnd = self.current
        if self.scheme == 1:
            half = self.processing_floor / 2
            return ball_from_timing(
                to_seconds(rnd.send_ps), to_seconds(arrival_ps), half, half, self.position, self.speed
            )
        slack = self.clock_sync_bound + self.prover_delays.delta2_uncertainty
        return ball_from_one_way(
            to_seconds(rnd.T_ps), to_seconds(arrival_ps), slack, self.position, self.speed
        )

    def handle_reply(self, msg: Reply, arrival_ps: int) -> Optional[Confirm]:
        """Judge a reply. Returns None for replies that are not for this
        verifier or that arrive while no round is open."""
        if msg.i != self.i:
            self.ignored.append((arrival_ps, "addressed to another verifier"))
            return None
        if self.current is None:
            self.ignored.append((arrival_ps, "no round open"))
            return None
        if msg.j != self.current.j:
            return self._confirm(0, SEQUENCING, arrival_ps)
        try:
            ball = self._ball(arrival_ps)
        except MeasurementRejected:
            return self._confirm(0, EARLY, arrival_ps)
        if arrival_ps > self.deadline_ps(self.current.T_ps):
            return self._confirm(0, LATE, arrival_ps)
        expected = self.keys.round(self.current.j).reply_part
        if len(msg.r) != len(expected) or not within_tolerance(msg.r, expected, self.gamma):
            return self._confirm(0, AUTH, arrival_ps)
        return self._confirm(1, OK, arrival_ps, ball)

    def on_deadline(self, j: int, now_ps: int) -> Optional[Confirm]:
        """Close round ``j`` with s=0 if no reply was judged in time."""
        if self.current is None or self.current.j != j:
            return None
        return self._confirm(0, LATE, now_ps)


@dataclass(frozen=True)
class VerificationReport:
    round: int
    verified: bool
    reason: str
    T_j: float
    completion_time: Optional[float]
    confirmations: tuple[tuple[int, int, str], ...]
    balls: tuple[Ball, ...]
    region_empty: Optional[bool]
    region_diameter: Optional[float]
    resolution: float
    expected_in_region: Optional[bool]
    timing_ball_uncertainty: float
    latency_uncertainty: float
    hull_condition: bool
    true_position: Optional[Position] = None
    true_in_region: Optional[bool] = None
    adversary: tuple = ()

    @property
    def region(self) -> Optional[Region]:
        return Region(self.balls) if self.balls else None

    def to_record(self) -> dict:
        def num(x):
            return None if x is None else float(f"{x:.12g}")

        return {
            "type": "round",
            "round": self.round,
            "verified": self.verified,
            "reason": self.reason,
            "T_j": num(self.T_j),
            "completion_time": num(self.completion_time),
            "confirmations": [{"i": i, "s": s, "reason": r} for i, s, r in self.confirmations],
            "region": [
                {"center": list(b.center.coords), "radius": float(f"{b.radius:.6g}")}
                for b in self.balls
            ],
            "region_text": Region(self.balls).describe() if self.balls else "[]",
            "region_empty": self.region_empty,
            "region_diameter": None if self.region_diameter is None else float(f"{self.region_diameter:.6g}"),
            "resolution": self.resolution,
            "expected_in_region": self.expected_in_region,
            "timing_ball_uncertainty": float(f"{self.timing_ball_uncertainty:.6g}"),
            "latency_uncertainty": float(f"{self.latency_uncertainty:.6g}"),
            "hull_condition": self.hull_condition,
            "true_position": None if self.true_position is None else list(self.true_position.coords),
            "true_in_region": self.true_in_region,
            "adversary": list(self.adversary),
        }


class Master:
    """Master agent A0: verifies round j only if every verifier confirmed s=1."""

    def __init__(
        self,
        verifier_positions: Sequence[Position],
        expected_location: Position,
        delta5: float = 0.0,
        timing_ball_uncertainty: float = 0.0,
        latency_uncertainty: float = 0.0,
        resolution: float = 1.0,
        max_grid_cells: Optional[int] = None,
    ):
        self.verifier_positions = list(verifier_positions)
        self.M = len(self.verifier_positions)
        self.expected_location = expected_location
        self.delta5_ps = to_ps(delta5)
        self.timing_ball_uncertainty = timing_ball_uncertainty
        self.latency_uncertainty = latency_uncertainty
        self.resolution = resolution
        self.max_grid_cells = max_grid_cells
        self.hull_condition = convex_hull_condition(self.verifier_positions, expected_location)
        self.pending: dict[int, dict[int, tuple[Confirm, int]]] = {}
        self.done: set[int] = set()

    def receive(self, confirm: Confirm, arrival_ps: int) -> bool:
        """Store a confirmation; True once all M have arrived for its round."""
        if confirm.j in self.done:
            return False
        got = self.pending.setdefault(confirm.j, {})
        got.setdefault(confirm.i, (confirm, arrival_ps))
        return len(got) == self.M

    def aggregate(self, j: int, T_ps: int, now_ps: Optional[int] = None) -> VerificationReport:
        """Decide round j from what has arrived. ``now_ps`` marks a timeout."""
        self.done.add(j)
        got = self.pending.pop(j, {})
        return master_aggregate(self, j, T_ps, got, now_ps)


def master_aggregate(
    state: Master,
    j: int,
    T_ps: int,
    confirms: dict[int, tuple[Confirm, int]],
    timeout_ps: Optional[int] = None,
) -> VerificationReport:
    rows = tuple(sorted((i, c.s, c.reason) for i, (c, _) in confirms.items()))
    balls = tuple(c.ball for i, (c, _) in sorted(confirms.items()) if c.s == 1 and c.ball is not None)
    failing = [(i, reason) for i, s, reason in rows if s != 1]
    missing = len(confirms) < state.M
    if failing:
        reason = failing[0][1]
    elif missing:
        reason = MISSING
    else:
        reason = OK

    region_empty = diameter = expected_in = None
    resolution = state.resolution
    if balls:
        region = Region(balls)
        if region.dim > 1 and state.max_grid_cells:
            resolution = effective_resolution(region, resolution, state.max_grid_cells)
        region_empty = region_is_empty(region)
        diameter = None if region_empty else region_diameter_bound(region, resolution)
        expected_in = region_contains(region, state.expected_location)
    verified = reason == OK
    if verified and region_empty:
        verified, reason = False, EMPTY_REGION

    if confirms and not missing:
        done_ps = max(a for _, a in confirms.values()) + state.delta5_ps
    else:
        done_ps = timeout_ps
    return VerificationReport(
        round=j,
        verified=verified,
        reason=reason,
        T_j=to_seconds(T_ps),
        completion_time=None if done_ps is None else to_seconds(done_ps),
        confirmations=rows,
        balls=balls,
        region_empty=region_empty,
        region_diameter=diameter,
        resolution=resolution,
        expected_in_region=expected_in,
        timing_ball_uncertainty=state.timing_ball_uncertainty,
        latency_uncertainty=state.latency_uncertainty,
        hull_condition=state.hull_condition,
    )
