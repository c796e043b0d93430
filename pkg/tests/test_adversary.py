import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import enumerate_impersonation
from posverify.adversary import (
    BiasedGuess,
    ChannelTap,
    Delay,
    Relocate,
    Strategy,
    UniformGuess,
    apply_delay_attack,
    apply_relocation,
    build_strategy,
    impersonation_batch,
    impersonation_outcome,
    run_impersonation_trial,
    schedule_exploit_window,
)
from posverify.bitkeys import BitString, KeyBlock
from posverify.errors import ConfigurationError
from posverify.protocol import LATE, MISSING, SEQUENCING, distribute_schedule
from posverify.simulator import simulate
from posverify.spacetime import SPEED_OF_LIGHT, Position, Trajectory, to_ps
from scenario_factory import line_config

C = SPEED_OF_LIGHT


# -- impersonation ---------------------------------------------------------


@pytest.mark.parametrize("n,m,gamma", [(2, 1, 0), (4, 2, 0), (4, 1, 0), (4, 2, 0.5)])
def test_state_machine_outcomes_match_enumeration(n, m, gamma):
    """Push every key and every pair of guesses through the real prover and verifier."""
    wins = total = 0
    for key in itertools.product((0, 1), repeat=n):
        for qg in itertools.product((0, 1), repeat=m):
            for rg in itertools.product((0, 1), repeat=n - m):
                wins += impersonation_outcome(key, qg, rg, gamma)
                total += 1
    assert Fraction(wins, total) == enumerate_impersonation(n, m, gamma)


def test_small_cases():
    assert enumerate_impersonation(4, 2, 0) == Fraction(7, 16)
    assert enumerate_impersonation(2, 1, 0) == Fraction(3, 4)
    # floor(0.99 * 2) = 1 wrong bit tolerated per half, so not every guess wins
    assert enumerate_impersonation(4, 2, 0.99) == Fraction(15, 16)


def test_trial_is_deterministic_and_batch_agrees():
    seeds = np.arange(500, dtype=np.uint64) + 12345
    batch = impersonation_batch(8, 4, 0.25, seeds)
    scalar = [run_impersonation_trial(8, 4, 0.25, int(s)) for s in seeds]
    assert batch.tolist() == scalar
    assert run_impersonation_trial(4, 2, 0, 99) == run_impersonation_trial(4, 2, 0, 99)


def test_batch_rate_near_exact_value():
    trials = 200_000
    hits = impersonation_batch(4, 2, 0, np.arange(trials, dtype=np.uint64)).sum()
    p = 7 / 16
    assert abs(hits / trials - p) <= 4 * math.sqrt(p * (1 - p) / trials)


def test_impersonation_through_the_simulator():
    cfg = line_config(n=4, adversary=[{"type": "impersonate", "targets": [1], "round": 1}])
    wins, locked = 0, 0
    trials = 400
    for k in range(trials):
        res = simulate(cfg.with_seed(k))
        wins += res.success
        locked += res.notes["prover_locked_out"]
        # the honest query arrives after the forged one: B never answers it
        assert not any(w.startswith("REPLY 1 1") and t > to_ps(1e-3) for t, w in res.notes["prover_emitted"])
    p = 7 / 16
    assert abs(wins / trials - p) <= 4 * math.sqrt(p * (1 - p) / trials)
    # a wrong query guess (probability 3/4) locks B out
    assert abs(locked / trials - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / trials)


def test_scheme2_impersonation_always_guesses():
    cfg = line_config(scheme=2, n=2, adversary=[{"type": "impersonate", "targets": [2], "round": 2}])
    wins = sum(simulate(cfg.with_seed(k)).success for k in range(300))
    p = 1 / 4
    assert abs(wins / 300 - p) <= 4 * math.sqrt(p * (1 - p) / 300)


def test_guess_policies():
    rng = np.random.default_rng(0)
    assert len(UniformGuess().guess(rng, 17)) == 17
    ones = BiasedGuess(1.0).guess(rng, 10)
    assert str(ones) == "1" * 10
    with pytest.raises(ConfigurationError):
        build_strategy({"type": "impersonate", "policy": {"type": "biased", "p_one": 2}})


# -- delay and jam -----------------------------------------------------------


def radii(result, j=1):
    return [b.radius for b in result.reports[j - 1].balls]


def test_small_delay_grows_ball_by_half_the_delay():
    eps = 1e-8
    added = eps / 2
    base = simulate(line_config(tolerance=eps))
    tap = ChannelTap(("B->A*",))
    hit = simulate(line_config(tolerance=eps), [apply_delay_attack(tap, added)])
    assert all(r.verified for r in hit.reports)
    for r0, r1 in zip(radii(base), radii(hit)):
        assert r1 - r0 == pytest.approx(C * added / 2, abs=1e-3)
    assert all(r.true_in_region for r in hit.reports)


def test_large_delay_fails_every_round_late():
    res = simulate(line_config(tolerance=1e-6, rounds=(1e-3, 4e-3, 7e-3)), [Delay(1e-3)])
    assert [r.reason for r in res.reports] == [LATE] * 3


def test_delay_longer_than_round_spacing():
    # stale replies land inside later rounds and look exactly like replays
    res = simulate(line_config(tolerance=1e-6), [Delay(1e-3)])
    assert not any(r.verified for r in res.reports)
    assert {r.reason for r in res.reports} <= {LATE, SEQUENCING}


def test_jam_everything_is_missing():
    res = simulate(line_config(adversary=[{"type": "jam"}]))
    assert [(r.verified, r.reason) for r in res.reports] == [(False, MISSING)] * 3


def test_jamming_one_verifiers_replies():
    res = simulate(line_config(adversary=[{"type": "jam", "channels": ["B->A2"]}]))
    for r in res.reports:
        assert not r.verified
        assert dict((i, s) for i, s, _ in r.confirmations) == {1: 1, 2: 0}


def test_negative_delay_is_rejected():
    with pytest.raises(ConfigurationError):
        Delay(-1.0)


def test_tap_patterns():
    tap = ChannelTap(("A*->B",))
    assert tap.matches("A1->B") and tap.matches("A12->B")
    assert not tap.matches("B->A1")
    assert not tap.matches("A1->A0")


# -- relocation --------------------------------------------------------------


def test_relocation_speed_cap():
    traj = Trajectory(Position((0.0,)))
    with pytest.raises(ConfigurationError):
        apply_relocation(Relocate(0.0, (2 * C,)), traj)
    with pytest.raises(ConfigurationError):
        apply_relocation(Relocate(0.0, (100.0,), speed_cap=50.0), traj)
    moved = apply_relocation(Relocate(1.0, (10.0,), duration=2.0), traj)
    assert moved.at(0.5).coords == (0.0,)
    assert moved.at(4.0).coords == pytest.approx((20.0,))


def test_zero_relocation_changes_nothing():
    base = simulate(line_config())
    still = simulate(line_config(adversary=[{"type": "relocate", "start_time": 1.5e-3, "velocity": [0.0]}]))
    assert [r.to_record() | {"adversary": []} for r in still.reports] == [
        r.to_record() for r in base.reports
    ]


def test_move_150m_between_rounds():
    # 150 m towards A2 in 1 us, well inside the 1 ms gap before round 2
    move = {"type": "relocate", "start_time": 1.5e-3, "duration": 1e-6, "velocity": [1.5e8]}
    res = simulate(line_config(adversary=[move]))
    first, second = res.reports[0], res.reports[1]
    assert first.verified
    confirms = {i: (s, why) for i, s, why in second.confirmations}
    assert confirms[1] == (0, LATE)  # 300 m longer round trip
    assert confirms[2][0] == 1  # shorter path only shrinks A2's ball
    assert res.reports[1].true_position.coords == pytest.approx((150.0,))


# -- schedule exploitation ----------------------------------------------------


def test_exploit_windows():
    gaps = schedule_exploit_window(distribute_schedule([0.0, 1e-3, 2e-3]), 343.0)
    assert gaps == pytest.approx([0.343, 0.343])
    assert schedule_exploit_window(distribute_schedule([0.0, 1e-3], encrypted=True), 343.0) is None
    assert schedule_exploit_window(distribute_schedule([0.0, 1e-6]), C) == pytest.approx([299.792458])


def test_exploit_moves_unseen_between_checks():
    exploit = {"type": "schedule_exploit", "max_speed": 343.0}
    res = simulate(line_config(scheme=2, rounds=(1e-3, 2e-3, 4e-3), adversary=[exploit]))
    note = res.notes["schedule_exploit"]
    assert note["windows"] == pytest.approx([0.343, 0.686])
    assert note["excursion"] == pytest.approx(0.343)
    # B is back in place for every check, so nothing is noticed
    assert all(r.verified for r in res.reports)


def test_encrypted_schedule_gives_no_windows():
    exploit = {"type": "schedule_exploit", "max_speed": 343.0}
    res = simulate(line_config(scheme=2, adversary=[exploit], schedule_encrypted=True))
    assert res.notes["schedule_exploit"] == {"windows": None, "excursion": 0.0}


def test_exploit_needs_scheme2():
    with pytest.raises(ConfigurationError):
        simulate(line_config(adversary=[{"type": "schedule_exploit"}]))


# -- clock attacks -----------------------------------------------------------


def reply_emissions(result):
    return [t for t, w in result.notes["prover_emitted"] if w.startswith("REPLY")]


@given(st.floats(0, 1e-5), st.sampled_from([0.0, 2e-8]))
def test_desync_bob_shifts_replies_exactly(offset, jitter):
    extra = {"prover": {"position": [0.0], "delays": {"delta2_uncertainty": jitter}}}
    base = simulate(line_config(scheme=2, **extra))
    late = simulate(line_config(scheme=2, adversary=[{"type": "desync_bob", "offset": offset}], **extra))
    shift = [b - a for a, b in zip(reply_emissions(base), reply_emissions(late))]
    assert len(shift) == 6
    assert set(shift) == {to_ps(offset)}


def test_desync_bob_never_causes_false_verification():
    res = simulate(line_config(scheme=2, adversary=[{"type": "desync_bob", "offset": 1e-6}]))
    assert all(r.reason == LATE for r in res.reports)


def test_desync_alice_breaks_scheme2_timing():
    res = simulate(line_config(scheme=2, adversary=[{"type": "desync_alice", "agent": 1, "offset": 1e-6}]))
    for r in res.reports:
        assert not r.verified
        assert dict((i, why) for i, _, why in r.confirmations)[1] == LATE


def test_desync_alice_resync_limits_drift():
    # 2 ns of error per ms unchecked; at most 0.2 ns with a resync every 100 us
    drift = {"type": "desync_alice", "agent": 1, "drift": 2e-6}
    free = simulate(line_config(scheme=2, adversary=[drift]))
    resync = simulate(line_config(scheme=2, adversary=[dict(drift, resync_period=1e-4)]))
    assert not any(r.verified for r in free.reports)
    assert all(r.verified for r in resync.reports)


def test_desync_alice_unknown_agent():
    with pytest.raises(ConfigurationError):
        simulate(line_config(adversary=[{"type": "desync_alice", "agent": 5, "offset": 1.0}]))


# -- key secrecy and spec parsing -------------------------------------------------


class Snoop(Strategy):
    kind = "snoop"

    def __init__(self):
        self.params = {}
        self.seen = []

    def configure(self, ctx):
        self.public = ctx.public

    def intercept(self, ctx, msg, channel):
        self.seen.append(msg)
        return 0.0


def _walk(obj):
    yield obj
    if isinstance(obj, dict):
        for v in obj.values():
            yield from _walk(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from _walk(v)


def test_adversary_sees_no_key_material():
    spy = Snoop()
    res = simulate(line_config(), [spy])
    assert all(r.verified for r in res.reports)
    assert not any(isinstance(x, (BitString, KeyBlock)) for x in _walk(spy.public))
    # what S does see is exactly what was on the wire
    kinds = {type(m).__name__ for m in spy.seen}
    assert kinds == {"Query", "Reply", "Confirm"}


def test_build_strategy_errors():
    with pytest.raises(ConfigurationError):
        build_strategy({"type": "teleport"})
    with pytest.raises(ConfigurationError):
        build_strategy({"type": "delay"})
    with pytest.raises(ConfigurationError):
        build_strategy({"seconds": 1.0})
    with pytest.raises(ConfigurationError):
        simulate(line_config(adversary=[{"type": "impersonate", "round": 9}]))
