"""Scenario files: JSON documents describing one simulated deployment.

Top-level fields::

    dimension, scheme, security {n, m, gamma, N, key_error_rate},
    verifiers [{position, delays, clock}],
    prover {position | trajectory, delays, clock, reply_mode},
    master {timeout, delta5}, rounds [T_j], tolerance_seconds,
    signal_speed, adversary [...], seed

Optional extras: expected_location, schedule_encrypted, schedule_lead,
collinear, resolution, max_grid_cells, processing_floor, clock_sync_bound.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .bitkeys import as_fraction, check_split
from .errors import ConfigurationError
from .geometry import LineProjection, fit_line
from .protocol import ADDRESSEE_ONLY, BROADCAST
from .spacetime import SPEED_OF_LIGHT, ClockModel, DelayProfile, Position, Trajectory

REQUIRED = ("dimension", "scheme", "security", "verifiers", "prover", "rounds", "tolerance_seconds")


@dataclass(frozen=True)
class ScenarioConfig:
    dimension: int
    scheme: int
    n: int
    m: int
    gamma: Any
    N: int
    verifier_positions: tuple[Position, ...]
    verifier_delays: tuple[DelayProfile, ...]
    verifier_clocks: tuple[ClockModel, ...]
    trajectory: Trajectory
    prover_delays: DelayProfile
    prover_clock: ClockModel
    expected_location: Position
    rounds: tuple[float, ...]
    tolerance: float
    reply_mode: str = BROADCAST
    key_error_rate: float = 0.0
    delta5: float = 0.0
    master_timeout: Optional[float] = None
    signal_speed: float = SPEED_OF_LIGHT
    adversary: tuple = ()
    seed: int = 0
    schedule_encrypted: bool = False
    schedule_lead: float = 1.0
    resolution: float = 1.0
    max_grid_cells: int = 128
    processing_floor: float = 0.0
    clock_sync_bound: float = 0.0
    projection: Optional[LineProjection] = field(default=None, compare=False)

    @property
    def M(self) -> int:
        return len(self.verifier_positions)

    @property
    def reply_bits(self) -> int:
        return self.n - self.m if self.scheme == 1 else self.n

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=int(seed))

    def with_adversary(self, adversary) -> "ScenarioConfig":
        return dataclasses.replace(self, adversary=tuple(adversary))


def _get(d: dict, key: str, where: str, default=..., kind=None):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected an object")
    if key not in d:
        if default is ...:
            raise ConfigurationError(f"{where}.{key}: required field is missing")
        return default
    value = d[key]
    if kind is not None and value is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{where}.{key}: cannot read {value!r} as {kind.__name__}") from None
    return value


def _position(value, where: str, dim: int) -> Position:
    try:
        coords = tuple(float(x) for x in value)
    except TypeError:
        raise ConfigurationError(f"{where}: position must be a list of numbers") from None
    if len(coords) != dim:
        raise ConfigurationError(f"{where}: expected {dim} coordinates, got {len(coords)}")
    if not all(math.isfinite(x) for x in coords):
        raise ConfigurationError(f"{where}: coordinates must be finite")
    return Position(coords)


def _delays(value, where: str) -> DelayProfile:
    if value is None:
        return DelayProfile()
    if not isinstance(value, dict):
        raise ConfigurationError(f"{where}: delays must be an object")
    known = {f.name for f in dataclasses.fields(DelayProfile)}
    extra = set(value) - known
    if extra:
        raise ConfigurationError(f"{where}: unknown delay fields {sorted(extra)}")
    try:
        return DelayProfile(**{k: float(v) for k, v in value.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _clock(value, where: str) -> ClockModel:
    if value is None:
        return ClockModel()
    try:
        return ClockModel(
            float(value.get("offset", 0.0)),
            float(value.get("drift", 0.0)),
            float(value.get("reference_epoch", 0.0)),
        )
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def _trajectory(prover: dict, dim: int) -> Trajectory:
    if "trajectory" in prover:
        t = prover["trajectory"]
        origin = _position(_get(t, "origin", "prover.trajectory"), "prover.trajectory.origin", dim)
        traj = Trajectory(origin)
        for k, leg in enumerate(_get(t, "legs", "prover.trajectory", [])):
            w = f"prover.trajectory.legs[{k}]"
            velocity = _position(_get(leg, "velocity", w), f"{w}.velocity", dim).coords
            traj = traj.with_leg(_get(leg, "start", w, kind=float),
                                 _get(leg, "duration", w, math.inf, float), velocity)
        if traj.max_speed() > SPEED_OF_LIGHT:
            raise ConfigurationError("prover.trajectory: speed exceeds the speed of light")
        return traj
    return Trajectory(_position(_get(prover, "position", "prover"), "prover.position", dim))


def from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a JSON object")
    for key in REQUIRED:
        if key not in doc:
            raise ConfigurationError(f"{key}: required field is missing")

    dim = _get(doc, "dimension", "scenario", kind=int)
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"dimension: must be 1, 2 or 3, got {dim}")
    scheme = _get(doc, "scheme", "scenario", kind=int)
    if scheme not in (1, 2):
        raise ConfigurationError(f"scheme: must be 1 or 2, got {scheme}")

    sec = doc["security"]
    n = _get(sec, "n", "security", kind=int)
    m = _get(sec, "m", "security", 0 if scheme == 2 else ..., int)
    gamma = _get(sec, "gamma", "security", 0.0)
    try:
        g = as_fraction(gamma)
    except (TypeError, ValueError):
        raise ConfigurationError(f"security.gamma: not a number: {gamma!r}") from None
    if not 0 <= g < 1:
        raise ConfigurationError(f"security.gamma: must satisfy 0 <= gamma < 1, got {gamma}")
    try:
        check_split(n, m, scheme)
    except ConfigurationError as exc:
        raise ConfigurationError(f"security: {exc}") from None
    if scheme == 2:
        m = 0

    rounds = doc["rounds"]
    if not isinstance(rounds, list) or not rounds:
        raise ConfigurationError("rounds: must be a non-empty list of times in seconds")
    try:
        rounds = tuple(float(t) for t in rounds)
    except (TypeError, ValueError):
        raise ConfigurationError("rounds: times must be numbers") from None
    if any(b <= a for a, b in zip(rounds, rounds[1:])):
        raise ConfigurationError("rounds: times must be strictly increasing")
    N = _get(sec, "N", "security", len(rounds), int)
    if N < len(rounds):
        raise ConfigurationError(f"security.N: {N} keys cannot cover {len(rounds)} rounds")
    key_error_rate = _get(sec, "key_error_rate", "security", 0.0, float)
    if not 0 <= key_error_rate <= 1:
        raise ConfigurationError("security.key_error_rate: must lie in [0, 1]")

    verifiers = doc["verifiers"]
    if not isinstance(verifiers, list) or not verifiers:
        raise ConfigurationError("verifiers: need at least one verifier")
    vpos, vdel, vclk = [], [], []
    for k, v in enumerate(verifiers):
        w = f"verifiers[{k}]"
        vpos.append(_position(_get(v, "position", w), f"{w}.position", dim))
        vdel.append(_delays(v.get("delays"), f"{w}.delays"))
        vclk.append(_clock(v.get("clock"), f"{w}.clock"))

    prover = doc["prover"]
    trajectory = _trajectory(prover, dim)
    reply_mode = _get(prover, "reply_mode", "prover", BROADCAST)
    if reply_mode not in (BROADCAST, ADDRESSEE_ONLY):
        raise ConfigurationError(f"prover.reply_mode: must be {BROADCAST!r} or {ADDRESSEE_ONLY!r}")
    expected = doc.get("expected_location")
    expected = trajectory.origin if expected is None else _position(expected, "expected_location", dim)

    master = doc.get("master") or {}
    timeout = _get(master, "timeout", "master", None, float)
    if timeout is not None and timeout <= 0:
        raise ConfigurationError("master.timeout: must be positive")

    tolerance = _get(doc, "tolerance_seconds", "scenario", kind=float)
    if not (math.isfinite(tolerance) and tolerance >= 0):
        raise ConfigurationError("tolerance_seconds: must be finite and non-negative")
    speed = _get(doc, "signal_speed", "scenario", SPEED_OF_LIGHT, float)
    if not 0 < speed <= SPEED_OF_LIGHT:
        raise ConfigurationError("signal_speed: must lie in (0, c]")
    adversary = doc.get("adversary") or []
    if not isinstance(adversary, list):
        raise ConfigurationError("adversary: must be a list of strategy objects")
    resolution = _get(doc, "resolution", "scenario", 1.0, float)
    if resolution <= 0:
        raise ConfigurationError("resolution: must be positive")

    cfg = ScenarioConfig(
        dimension=dim,
        scheme=scheme,
        n=n,
        m=m,
        gamma=gamma,
        N=N,
        verifier_positions=tuple(vpos),
        verifier_delays=tuple(vdel),
        verifier_clocks=tuple(vclk),
        trajectory=trajectory,
        prover_delays=_delays(prover.get("delays"), "prover.delays"),
        prover_clock=_clock(prover.get("clock"), "prover.clock"),
        expected_location=expected,
        rounds=rounds,
        tolerance=tolerance,
        reply_mode=reply_mode,
        key_error_rate=key_error_rate,
        delta5=_get(master, "delta5", "master", 0.0, float),
        master_timeout=timeout,
        signal_speed=speed,
        adversary=tuple(adversary),
        seed=_get(doc, "seed", "scenario", 0, int),
        schedule_encrypted=bool(doc.get("schedule_encrypted", False)),
        schedule_lead=_get(doc, "schedule_lead", "scenario", 1.0, float),
        resolution=resolution,
        max_grid_cells=_get(doc, "max_grid_cells", "scenario", 128, int),
        processing_floor=_get(doc, "processing_floor", "scenario", 0.0, float),
        clock_sync_bound=_get(doc, "clock_sync_bound", "scenario", 0.0, float),
    )
    if doc.get("collinear"):
        cfg = project_collinear(cfg)
    return cfg


def project_collinear(cfg: ScenarioConfig) -> ScenarioConfig:
    """Fit a line through the verifiers and L and rerun everything in 1D along it."""
    proj = fit_line(list(cfg.verifier_positions) + [cfg.expected_location])
    traj = Trajectory(proj.project(cfg.trajectory.origin))
    for start, duration, velocity in cfg.trajectory.legs:
        traj = traj.with_leg(start, duration, proj.project_vector(velocity))
    return dataclasses.replace(
        cfg,
        dimension=1,
        verifier_positions=tuple(proj.project(p) for p in cfg.verifier_positions),
        expected_location=proj.project(cfg.expected_location),
        trajectory=traj,
        projection=proj,
    )


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file. JSON syntax errors report line and column."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)
