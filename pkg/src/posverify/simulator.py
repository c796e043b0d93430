"""Discrete-event engine that plays a scenario through the protocol state machines.

Time is integer picoseconds of the shared frame. Events are popped in
order of (time, kind, agent, content), so the outcome never depends on the
order in which simultaneous events were scheduled.
"""

from __future__ import annotations

import dataclasses
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import Impersonate, Relocate, ScheduleExploit, build_strategy, impersonation_batch
from .analytics import p_reply_guess, p_s_error_tolerant_exact
from .bitkeys import KEY_PRNG, generate_key_block, with_bit_errors
from .errors import ConfigurationError, UsageError
from .protocol import (
    Confirm,
    Master,
    Prover,
    Query,
    Reply,
    Schedule,
    VerificationReport,
    Verifier,
    distribute_schedule,
    verifier_name,
)
from .geometry import region_contains
from .scenario import ScenarioConfig
from .spacetime import (
    SPEED_OF_LIGHT,
    ClockModel,
    movement_bound,
    propagation_ps,
    scheme2_uncertainty,
    timing_ball_uncertainty,
    to_ps,
    to_seconds,
)

# event kinds, in tie-break order
DELIVER, EMIT, TIMER = 0, 1, 2


class _StackedClock:
    """A configured clock with an adversarial perturbation on top."""

    def __init__(self, base, extra):
        self.base, self.extra = base, extra

    def reading_ps(self, t_ps: int) -> int:
        return self.base.reading_ps(t_ps) + self.extra.reading_ps(t_ps) - t_ps

    def true_ps(self, reading_ps: int) -> int:
        t = reading_ps
        for _ in range(64):
            step = reading_ps - self.reading_ps(t)
            if step == 0:
                break
            t += step
        while self.reading_ps(t) < reading_ps:
            t += 1
        return t


def _stack(base, extra):
    if base == ClockModel():
        return extra
    if isinstance(base, ClockModel) and isinstance(extra, ClockModel):
        return base.composed(extra)
    return _StackedClock(base, extra)


class EventQueue:
    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, t_ps: int, kind: int, rank: int, key: tuple, payload) -> None:
        # seq only separates events whose ordering key is identical
        heapq.heappush(self._heap, (int(t_ps), kind, rank, key, self._seq, payload))
        self._seq += 1

    def pop(self):
        t, kind, _, _, _, payload = heapq.heappop(self._heap)
        return t, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class TrialResult:
    reports: list[VerificationReport]
    success: bool
    log: list[str] = field(default_factory=list)
    notes: dict = field(default_factory=dict)


class _Context:
    """AdversaryContext handed to strategies."""

    def __init__(self, sim: "Simulation"):
        self._sim = sim
        cfg = sim.config
        self.scheme = cfg.scheme
        self.rng = np.random.default_rng([cfg.seed, 0xAD])
        self.public = sim.public_data()

    def now_ps(self) -> int:
        return self._sim.now

    def set_timer(self, t_ps, strategy, tag) -> None:
        idx = next(k for k, s in enumerate(self._sim.strategies) if s is strategy)
        self._sim.push_timer(max(int(t_ps), self._sim.now), ("S", idx, tag))

    def inject(self, msg, dest, deliver_ps) -> None:
        sim = self._sim
        t = max(int(deliver_ps), sim.now)
        msg = msg.routed(source="S", dest=dest, emit_ps=t)
        sim.log.append(msg.log_line())
        sim.push_deliver(t, msg, dest)

    def trajectory(self):
        return self._sim.trajectory

    def set_trajectory(self, trajectory) -> None:
        if trajectory.max_speed() > SPEED_OF_LIGHT:
            raise ConfigurationError("the prover cannot move faster than light")
        self._sim.trajectory = trajectory

    def perturb_verifier_clock(self, i, clock) -> None:
        sim = self._sim
        if not 1 <= i <= sim.config.M:
            raise ConfigurationError(f"no verifier {i} to desynchronise")
        sim.clocks[i] = _stack(sim.clocks[i], clock)

    def perturb_prover_clock(self, clock) -> None:
        self._sim.prover.clock = _stack(self._sim.prover.clock, clock)

    def schedule_view(self):
        s = self._sim.schedule
        return None if s is None else s.adversary_view()


class Simulation:
    """One run of a scenario. ``strategies`` adds ready-made Strategy objects
    to the ones described in the config."""

    def __init__(self, config: ScenarioConfig, strategies=()):
        cfg = config
        self.config = cfg
        self.queue = EventQueue()
        self.now = 0
        self.log: list[str] = []
        self.trajectory = cfg.trajectory
        M = cfg.M
        self.blocks = {
            i: generate_key_block(cfg.seed, i, cfg.N, cfg.n, cfg.m, cfg.scheme) for i in range(1, M + 1)
        }
        prover_blocks = {
            i: with_bit_errors(b, cfg.key_error_rate, cfg.seed) for i, b in self.blocks.items()
        }
        self.prover = Prover(prover_blocks, cfg.gamma, cfg.prover_delays, cfg.reply_mode,
                             cfg.scheme, cfg.prover_clock)
        self.clocks = {i: cfg.verifier_clocks[i - 1] for i in range(1, M + 1)}
        self.verifiers = {
            i: Verifier(
                i,
                cfg.verifier_positions[i - 1],
                self.blocks[i],
                cfg.gamma,
                expected_distance=cfg.verifier_positions[i - 1].distance(cfg.expected_location),
                tolerance=cfg.tolerance,
                prover_delays=cfg.prover_delays,
                delays=cfg.verifier_delays[i - 1],
                scheme=cfg.scheme,
                speed=cfg.signal_speed,
                processing_floor=cfg.processing_floor,
                clock_sync_bound=cfg.clock_sync_bound,
            )
            for i in range(1, M + 1)
        }
        if cfg.scheme == 1:
            ball_u = timing_ball_uncertainty(cfg.prover_delays, cfg.signal_speed)
            d34 = max(d.delta3 + d.delta4 for d in cfg.verifier_delays)
            latency_u = ball_u + cfg.signal_speed * d34
        else:
            ball_u = cfg.signal_speed * (cfg.clock_sync_bound + cfg.prover_delays.delta2_uncertainty)
            latency_u = scheme2_uncertainty(cfg.clock_sync_bound, cfg.prover_delays.delta2_uncertainty,
                                            max(d.delta3 for d in cfg.verifier_delays), cfg.signal_speed)
        self.master = Master(
            cfg.verifier_positions,
            cfg.expected_location,
            cfg.delta5,
            timing_ball_uncertainty=ball_u,
            latency_uncertainty=latency_u,
            resolution=cfg.resolution,
            max_grid_cells=cfg.max_grid_cells,
        )
        self._slack_ps = max(
            v.deadline_ps(0) - v.one_way_ps - v.tolerance_ps for v in self.verifiers.values()
        )
        self._d34_ps = max(to_ps(d.delta3) + to_ps(d.delta4) for d in cfg.verifier_delays)
        self.schedule: Optional[Schedule] = None
        if cfg.scheme == 2:
            self.schedule = distribute_schedule(cfg.rounds, cfg.schedule_encrypted)
        self.strategies = [build_strategy(s) for s in cfg.adversary] + list(strategies)
        if cfg.projection is not None:
            self._project_strategies()
        self.reports: dict[int, VerificationReport] = {}
        self.jitter_rng = np.random.default_rng([cfg.seed, 0x717])
        self.prover_emitted: list[tuple[int, str]] = []  # (true ps, wire) of every B transmission

    def _project_strategies(self) -> None:
        proj = self.config.projection
        for s in self.strategies:
            if isinstance(s, Relocate):
                s.velocity = proj.project_vector(s.velocity)
            if isinstance(s, ScheduleExploit) and s.direction is not None:
                s.direction = proj.project_vector(s.direction)

    def public_data(self) -> dict:
        cfg = self.config
        honest = {}
        for i, v in self.verifiers.items():
            extra = to_ps(cfg.prover_delays.delta1) + to_ps(cfg.prover_delays.delta2) if cfg.scheme == 1 else 0
            honest[i] = v.one_way_ps + extra
        return {
            "rounds": list(cfg.rounds),
            "M": cfg.M,
            "n": cfg.n,
            "m": cfg.m,
            "reply_bits": cfg.reply_bits,
            "gamma": cfg.gamma,
            "verifier_positions": [p.coords for p in cfg.verifier_positions],
            "expected_location": cfg.expected_location.coords,
            "signal_speed": cfg.signal_speed,
            "honest_delay_ps": honest,
        }

    # ranks order agents within a tie: A0, A1..AM, B, S
    def _rank(self, name: Optional[str]) -> int:
        if name is None:
            return self.config.M + 3
        if name == "B":
            return self.config.M + 1
        if name == "S":
            return self.config.M + 2
        return int(name[1:])

    def push_deliver(self, t_ps: int, msg, dest: str) -> None:
        key = (msg.kind, msg.wire(), self._rank(msg.source))
        self.queue.push(t_ps, DELIVER, self._rank(dest), key, (msg, dest))

    def push_emit(self, t_ps: int, msg) -> None:
        key = (msg.kind, msg.wire(), self._rank(msg.dest))
        self.queue.push(t_ps, EMIT, self._rank(msg.source), key, msg)

    def push_timer(self, t_ps: int, tag: tuple) -> None:
        self.queue.push(t_ps, TIMER, self._rank(tag[0]), tuple(repr(x) for x in tag), tag)

    def _position_of(self, name: str, t_ps: int):
        if name == "B":
            return self.trajectory.at(to_seconds(t_ps))
        return self.config.verifier_positions[int(name[1:]) - 1]

    def _arrival_ps(self, src_pos, dest: str, t_emit: int) -> int:
        """Earliest arrival respecting causality; iterates for a moving receiver."""
        speed = self.config.signal_speed
        if dest != "B" or not self.trajectory.legs:
            return t_emit + propagation_ps(src_pos.distance(self._position_of(dest, t_emit)), speed)
        t = t_emit
        for _ in range(100):
            nxt = t_emit + propagation_ps(src_pos.distance(self._position_of(dest, t)), speed)
            if nxt == t:
                break
            t = nxt
        # an approaching receiver makes the iteration oscillate; settle on the
        # earliest causal picosecond (slack is monotone while the prover is slower than light)
        while propagation_ps(src_pos.distance(self._position_of(dest, t)), speed) > t - t_emit:
            t += 1
        while t > t_emit and propagation_ps(src_pos.distance(self._position_of(dest, t - 1)), speed) <= t - 1 - t_emit:
            t -= 1
        return t

    def _transmit(self, msg) -> None:
        """Route one emitted message: fan out, let strategies act, schedule deliveries."""
        if isinstance(msg, (Confirm, Schedule)):
            # ideal authenticated channels; delta5 already models the transit
            dests = [msg.dest]
        elif msg.dest is None:
            dests = [verifier_name(i) for i in range(1, self.config.M + 1)]
        else:
            dests = [msg.dest]
        if msg.source == "B":
            self.prover_emitted.append((self.now, msg.wire()))
        src_pos = None if isinstance(msg, (Confirm, Schedule)) else self._position_of(msg.source, self.now)
        ctx = self.ctx
        for dest in dests:
            channel = f"{msg.source}->{dest}"
            extra = 0.0
            for strat in self.strategies:
                d = strat.intercept(ctx, msg, channel)
                if d is None:
                    extra = None
                    break
                extra += d
            line = f"{to_seconds(self.now):.12g} {channel} {msg.wire()}"
            if extra is None:
                self.log.append(line + " [dropped]")
                continue
            if extra:
                line += f" [+{extra:.6g}s]"
            self.log.append(line)
            if src_pos is None:
                arrive = self.now
            else:
                arrive = self._arrival_ps(src_pos, dest, self.now)
            self.push_deliver(arrive + to_ps(extra), msg, dest)

    def _timeout_ps(self, T_ps: int) -> int:
        cfg = self.config
        if cfg.master_timeout is not None:
            return T_ps + to_ps(cfg.master_timeout)
        farthest = max(v.one_way_ps for v in self.verifiers.values())
        # one extra picosecond so a confirm sent exactly at a verifier deadline still counts
        return (T_ps + farthest + self._slack_ps + self._d34_ps + self.master.delta5_ps
                + 10 * to_ps(cfg.tolerance) + 1)

    def _start(self) -> None:
        cfg = self.config
        for j, T in enumerate(cfg.rounds, start=1):
            T_ps = to_ps(T)
            for i, v in self.verifiers.items():
                local = T_ps - v.one_way_ps
                self.push_timer(self.clocks[i].true_ps(local), (verifier_name(i), "open", j))
            self.push_timer(self._timeout_ps(T_ps), ("A0", "timeout", j))
        if cfg.scheme == 2:
            t0 = to_ps(cfg.rounds[0] - cfg.schedule_lead)
            self.push_emit(t0, self.schedule.routed(emit_ps=t0))

    def _verifier_timer(self, i: int, what: str, j: int) -> None:
        v = self.verifiers[i]
        T_ps = to_ps(self.config.rounds[j - 1])
        clock = self.clocks[i]
        if what == "open":
            if self.config.scheme == 1:
                q = v.emit_query(j, T_ps)
                self.push_emit(self.now, q.routed(emit_ps=self.now))
            else:
                v.open_round(j, T_ps)
            self.push_timer(max(self.now, clock.true_ps(v.deadline_ps(T_ps))), (verifier_name(i), "deadline", j))
        else:
            c = v.on_deadline(j, clock.reading_ps(self.now))
            if c is not None:
                self._emit_confirm(i, c)

    def _emit_confirm(self, i: int, c: Confirm) -> None:
        t = max(self.now, self.clocks[i].true_ps(c.emit_ps))
        self.push_emit(t, c.routed(emit_ps=t))

    def _deliver(self, msg, dest: str) -> None:
        if dest == "B":
            if isinstance(msg, Query):
                reply = self.prover.handle_query(msg, self.now)
                if reply is not None:
                    self.push_emit(reply.emit_ps, reply)
            elif isinstance(msg, Schedule):
                self._schedule_replies(msg)
            return
        if dest == "A0":
            if isinstance(msg, Confirm) and self.master.receive(msg, self.now):
                self._finish(msg.j, None)
            return
        i = int(dest[1:])
        if isinstance(msg, Reply):
            c = self.verifiers[i].handle_reply(msg, self.clocks[i].reading_ps(self.now))
            if c is not None:
                self._emit_confirm(i, c)

    def _schedule_replies(self, schedule: Schedule) -> None:
        cfg = self.config
        spread = to_ps(cfg.prover_delays.delta2_uncertainty)
        for j in range(1, len(schedule.times) + 1):
            for i in range(1, cfg.M + 1):
                jitter = int(self.jitter_rng.integers(-spread, spread + 1)) if spread else 0
                reply = self.prover.scheduled_reply(schedule, j, i, jitter)
                if reply.emit_ps >= self.now:
                    self.push_emit(reply.emit_ps, reply)

    def _finish(self, j: int, timeout_ps: Optional[int]) -> None:
        T_ps = to_ps(self.config.rounds[j - 1])
        self.reports[j] = self.master.aggregate(j, T_ps, timeout_ps)

    def run(self) -> TrialResult:
        self.ctx = _Context(self)
        # strategies may schedule actions at any time before the first round
        self.now = -(2**62)
        for s in self.strategies:
            s.configure(self.ctx)
        self._start()
        while self.queue:
            t, kind, payload = self.queue.pop()
            self.now = t
            if kind == DELIVER:
                self._deliver(*payload)
            elif kind == EMIT:
                self._transmit(payload)
            else:
                owner = payload[0]
                if owner == "S":
                    self.strategies[payload[1]].on_timer(self.ctx, payload[2])
                elif owner == "A0":
                    if payload[2] not in self.master.done:
                        self._finish(payload[2], t)
                else:
                    self._verifier_timer(int(owner[1:]), payload[1], payload[2])
        return self._result()

    def _result(self) -> TrialResult:
        cfg = self.config
        notes = {s.kind: s.notes() for s in self.strategies}
        notes["prover_emitted"] = self.prover_emitted
        reports = []
        for j in sorted(self.reports):
            r = self.reports[j]
            true_pos = self.trajectory.at(r.T_j)
            inside = region_contains(r.region, true_pos) if r.balls else None
            reports.append(
                dataclasses.replace(r, true_position=true_pos, true_in_region=inside,
                                adversary=tuple(cfg.adversary))
            )
        imp = [s for s in self.strategies if isinstance(s, Impersonate)]
        if imp:
            success = all(_impersonation_won(self.reports.get(s.round), s.targets) for s in imp)
        else:
            success = all(r.verified for r in reports)
        notes["prover_locked_out"] = self.prover.locked_out
        return TrialResult(reports, success, self.log, notes)


def _impersonation_won(report: Optional[VerificationReport], targets) -> bool:
    if report is None:
        return False
    accepted = {i for i, s, _ in report.confirmations if s == 1}
    return all(i in accepted for i in targets)


def simulate(config: ScenarioConfig, strategies=()) -> TrialResult:
    return Simulation(config, strategies).run()


def run_scenario(config: ScenarioConfig) -> list[VerificationReport]:
    """Play every round of ``config``; the reports depend only on the config and its seed."""
    return simulate(config).reports


@dataclass(frozen=True)
class MonteCarloSummary:
    trials: int
    successes: int
    base_seed: int
    method: str
    analytic: Optional[float] = None

    @property
    def mean(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        return math.sqrt(self.mean * (1 - self.mean) / self.trials)

    @property
    def band(self) -> tuple[float, float]:
        """Normal-approximation 4-sigma interval around the empirical mean."""
        return (self.mean - 4 * self.stderr, self.mean + 4 * self.stderr)

    @property
    def sigma_distance(self) -> Optional[float]:
        """|mean - analytic| in units of the binomial sigma at the analytic value."""
        if self.analytic is None:
            return None
        p = self.analytic
        sigma = math.sqrt(p * (1 - p) / self.trials)
        if sigma == 0:
            return 0.0 if self.mean == p else math.inf
        return abs(self.mean - p) / sigma

    def to_record(self) -> dict:
        lo, hi = self.band
        return {
            "type": "monte_carlo",
            "trials": self.trials,
            "successes": self.successes,
            "mean": float(f"{self.mean:.12g}"),
            "stderr": float(f"{self.stderr:.6g}"),
            "band_low": float(f"{lo:.12g}"),
            "band_high": float(f"{hi:.12g}"),
            "analytic": None if self.analytic is None else float(f"{self.analytic:.12g}"),
            "sigma_distance": None if self.sigma_distance is None else float(f"{self.sigma_distance:.6g}"),
            "base_seed": self.base_seed,
            "method": self.method,
        }


def impersonation_strategy(config: ScenarioConfig) -> Optional[dict]:
    imps = [a for a in config.adversary if isinstance(a, dict) and a.get("type") == "impersonate"]
    return imps[0] if len(imps) == 1 else None


def analytic_success(config: ScenarioConfig) -> Optional[float]:
    """Exact success chance of the configured impersonation, per attacked verifier set."""
    spec = impersonation_strategy(config)
    if spec is None or len(config.adversary) != 1 or config.key_error_rate:
        return None
    if spec.get("policy") not in (None, "uniform"):
        return None
    if config.scheme == 1:
        p = p_s_error_tolerant_exact(config.n, config.m, config.gamma)
    else:
        p = p_reply_guess(config.n, config.gamma)
    return float(p ** len(spec.get("targets", [1])))


def _kernel_applies(config: ScenarioConfig) -> bool:
    spec = impersonation_strategy(config)
    return (
        spec is not None
        and len(config.adversary) == 1
        and config.scheme == 1
        and config.key_error_rate == 0
        and spec.get("policy") in (None, "uniform")
        and len(spec.get("targets", [1])) == 1
    )


def monte_carlo(config: ScenarioConfig, trials: int) -> MonteCarloSummary:
    """Run ``trials`` seeded trials; trial k uses seed ``config.seed + k``.

    A lone uniform impersonation against scheme 1 is evaluated with the
    vectorised per-seed kernel; everything else runs the full simulation.
    """
    if trials < 1:
        raise UsageError("need at least one trial")
    base = config.seed
    if _kernel_applies(config):
        seeds = base + np.arange(trials, dtype=np.uint64)
        wins = int(np.count_nonzero(impersonation_batch(config.n, config.m, config.gamma, seeds)))
        method = "kernel"
    else:
        wins = sum(simulate(config.with_seed(base + k)).success for k in range(trials))
        method = "simulation"
    return MonteCarloSummary(trials, wins, base, method, analytic_success(config))


@dataclass(frozen=True)
class DelayReport:
    delta_L: float
    delta_V: float
    delta_R: Optional[float]
    movement_bound: Optional[float]

    def to_record(self) -> dict:
        def num(x):
            return None if x is None else float(f"{x:.12g}")

        return {
            "type": "delays",
            "delta_L": num(self.delta_L),
            "delta_V": num(self.delta_V),
            "delta_R": num(self.delta_R),
            "movement_bound": num(self.movement_bound),
        }


def delay_report(config: ScenarioConfig, reports=None, max_speed: float = SPEED_OF_LIGHT) -> DelayReport:
    """Location delay, verification latency, repetition period and the
    distance the prover could cover in one period."""
    d = config.prover_delays
    delta_L = d.delta1 + d.delta2
    delta_V = max(v.delta3 + v.delta4 for v in config.verifier_delays) + config.delta5
    gaps = np.diff(config.rounds)
    delta_R = float(gaps.min()) if len(gaps) else None
    bound = movement_bound(delta_R, max_speed) if delta_R else None
    return DelayReport(delta_L, delta_V, delta_R, bound)


def summary_record(config: ScenarioConfig, result: TrialResult) -> dict:
    reports = result.reports
    rec = {
        "type": "summary",
        "rounds": len(reports),
        "verified": sum(r.verified for r in reports),
        "all_verified": all(r.verified for r in reports),
        "success": result.success,
        "seed": config.seed,
        "scheme": config.scheme,
        "key_prng": KEY_PRNG,
        "prover_locked_out": result.notes.get("prover_locked_out"),
        "hull_condition": reports[0].hull_condition if reports else None,
    }
    if config.projection is not None:
        rec["collinear_max_residual"] = float(f"{config.projection.max_residual:.6g}")
    rec.update({k: v for k, v in delay_report(config).to_record().items() if k != "type"})
    return rec
