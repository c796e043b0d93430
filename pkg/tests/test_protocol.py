import pytest
from hypothesis import given
from hypothesis import strategies as st

from posverify.bitkeys import BitString, generate_key_block
from posverify.errors import ConfigurationError, ProtocolError, UsageError
from posverify.geometry import Ball
from posverify.protocol import (
    ADDRESSEE_ONLY,
    AUTH,
    LATE,
    MISSING,
    OK,
    SEQUENCING,
    Confirm,
    Master,
    Prover,
    Query,
    Reply,
    Schedule,
    Verifier,
    distribute_schedule,
    parse_wire,
)
from posverify.spacetime import SPEED_OF_LIGHT, ClockModel, DelayProfile, Position, to_ps

C = SPEED_OF_LIGHT
US = 1_000_000  # picoseconds per microsecond


def block(i=1, N=10, n=8, m=4, scheme=1, seed=3):
    return generate_key_block(seed, i, N, n, m, scheme)


def make_verifier(distance=0.0, tolerance=1e-9, gamma=0, prover=DelayProfile(), scheme=1, **kw):
    n, m = (8, 4) if scheme == 1 else (8, 0)
    keys = block(n=n, m=m, scheme=scheme)
    v = Verifier(1, Position((0.0,)), keys, gamma, expected_distance=distance, tolerance=tolerance,
                 prover_delays=prover, scheme=scheme, **kw)
    return v, keys


# -- verifier queries ------------------------------------------------------


def test_query_timed_to_reach_L_at_T():
    v, keys = make_verifier(distance=C * 1e-6)
    q = v.emit_query(1, to_ps(1.0))
    assert q.emit_time == pytest.approx(1.0 - 1e-6, abs=1e-12)
    assert q.q == keys.round(1).query_part
    assert q.wire() == f"QUERY 1 1 {keys.round(1).query_part}"


def test_colocated_query_leaves_at_T():
    v, _ = make_verifier(distance=0.0)
    assert v.emit_query(1, to_ps(2.5)).emit_ps == to_ps(2.5)


def test_key_exhaustion_is_a_protocol_error():
    v, _ = make_verifier()
    for j in range(1, 11):
        v.emit_query(j, j * US)
    with pytest.raises(ProtocolError):
        v.emit_query(11, 11 * US)


def test_rounds_must_run_in_order():
    v, _ = make_verifier()
    with pytest.raises(ProtocolError):
        v.emit_query(2, US)


def test_scheme_mismatch_is_usage_error():
    v1, _ = make_verifier()
    v2, _ = make_verifier(scheme=2)
    with pytest.raises(UsageError):
        v1.open_round(1, US)
    with pytest.raises(UsageError):
        v2.emit_query(1, US)


# -- prover ----------------------------------------------------------------


def test_honest_reply_after_processing_delays():
    keys = block()
    delays = DelayProfile(delta1=1e-7, delta2=2e-7)
    prover = Prover({1: keys}, 0, delays)
    reply = prover.handle_query(Query(1, 1, keys.round(1).query_part, source="A1"), 5 * US)
    assert reply.r == keys.round(1).reply_part
    assert reply.emit_ps == 5 * US + to_ps(3e-7)
    assert reply.dest is None  # broadcast
    assert not prover.locked_out


def test_addressee_only_replies_go_to_claimed_source():
    keys = {1: block(1), 2: block(2)}
    prover = Prover(keys, 0, reply_mode=ADDRESSEE_ONLY)
    # physically sent by A1 but claims index 2
    reply = prover.handle_query(Query(2, 1, keys[2].round(1).query_part, source="A1"), 0)
    assert reply.i == 2 and reply.dest == "A2"


def test_flipped_bit_locks_out_permanently():
    keys = block()
    prover = Prover({1: keys}, 0)
    bad = keys.round(1).query_part.flipped([0])
    assert prover.handle_query(Query(1, 1, bad), 0) is None
    assert prover.locked_out
    assert prover.handle_query(Query(1, 1, keys.round(1).query_part), 10) is None
    assert prover.handle_query(Query(1, 2, keys.round(2).query_part), 20) is None
    assert prover.locked_out


def test_tolerance_boundary_for_queries():
    keys = block(n=40, m=20)
    q = keys.round(1).query_part
    # floor(0.1 * 20) = 2 flips allowed
    assert Prover({1: keys}, 0.1).handle_query(Query(1, 1, q.flipped([0, 5])), 0) is not None
    p = Prover({1: keys}, 0.1)
    assert p.handle_query(Query(1, 1, q.flipped([0, 5, 9])), 0) is None
    assert p.locked_out


def test_reply_string_is_sent_only_once():
    keys = block()
    prover = Prover({1: keys}, 0)
    q = Query(1, 1, keys.round(1).query_part)
    assert prover.handle_query(q, 0) is not None
    assert prover.handle_query(q, 100) is None
    # a spent round is not a failed authentication
    assert not prover.locked_out


def test_unknown_verifier_or_round_locks_out():
    keys = block(N=2)
    p = Prover({1: keys}, 0)
    assert p.handle_query(Query(1, 3, keys.round(1).query_part), 0) is None
    assert p.locked_out


def test_scheduled_reply_completes_at_local_T():
    keys = block(n=8, m=0, scheme=2)
    sched = distribute_schedule([1e-3, 2e-3])
    p = Prover({1: keys}, 0, scheme=2)
    r = p.scheduled_reply(sched, 1, 1)
    assert r.emit_ps == to_ps(1e-3)
    assert r.r == keys.round(1).reply_part and len(r.r) == 8
    with pytest.raises(ProtocolError):
        p.scheduled_reply(sched, 1, 1)
    with pytest.raises(ProtocolError):
        p.scheduled_reply(sched, 3, 1)


def test_slow_prover_clock_delays_completion():
    keys = block(n=8, m=0, scheme=2)
    sched = distribute_schedule([1e-3])
    # a clock that reads 1 us behind completes 1 us late in true time
    p = Prover({1: keys}, 0, scheme=2, clock=ClockModel(-1e-6))
    assert p.scheduled_reply(sched, 1, 1).emit_ps == to_ps(1e-3 + 1e-6)
    jittered = Prover({1: keys}, 0, scheme=2).scheduled_reply(sched, 1, 1, jitter_ps=-to_ps(1e-7))
    assert jittered.emit_ps == to_ps(1e-3 - 1e-7)


def test_prover_scheme_guards():
    with pytest.raises(UsageError):
        Prover({}, 0, scheme=2).handle_query(Query(1, 1, BitString.from_str("0")), 0)
    with pytest.raises(UsageError):
        Prover({}, 0).scheduled_reply(Schedule((1.0,)), 1, 1)
    with pytest.raises(ConfigurationError):
        Prover({}, 0, reply_mode="shout")


# -- verifier replies ------------------------------------------------------


def honest_exchange(distance=150.0, tol=1e-9, prover=DelayProfile(delta1=2e-7, delta2=3e-7)):
    v, keys = make_verifier(distance=distance, tolerance=tol, prover=prover)
    T = to_ps(1e-3)
    q = v.emit_query(1, T)
    arrival = T + v.one_way_ps + to_ps(prover.delta1) + to_ps(prover.delta2)
    return v, keys, q, T, arrival


def test_honest_reply_confirms():
    v, keys, _, _, arrival = honest_exchange()
    c = v.handle_reply(Reply(1, 1, keys.round(1).reply_part), arrival)
    assert (c.s, c.reason) == (1, OK)
    assert c.ball.radius == pytest.approx(150.0 + C * 5e-7 / 2, abs=1e-3)
    assert c.emit_ps == arrival  # delta3 = delta4 = 0


def test_reply_late_by_two_tolerances_is_rejected():
    v, keys, _, _, arrival = honest_exchange()
    c = v.handle_reply(Reply(1, 1, keys.round(1).reply_part), arrival + 2 * v.tolerance_ps)
    assert (c.s, c.reason) == (0, LATE)


def test_reply_with_wrong_bits_fails_auth():
    v, keys, _, _, arrival = honest_exchange()
    c = v.handle_reply(Reply(1, 1, keys.round(1).reply_part.flipped([1])), arrival)
    assert (c.s, c.reason) == (0, AUTH)


def test_replayed_reply_hits_sequencing():
    v, keys, _, T, arrival = honest_exchange()
    assert v.handle_reply(Reply(1, 1, keys.round(1).reply_part), arrival).s == 1
    v.emit_query(2, T + 1000 * US)
    c = v.handle_reply(Reply(1, 1, keys.round(1).reply_part), arrival + 1000 * US)
    assert (c.s, c.reason) == (0, SEQUENCING)


def test_reply_for_other_verifier_is_ignored():
    v, keys, _, _, arrival = honest_exchange()
    assert v.handle_reply(Reply(2, 1, keys.round(1).reply_part), arrival) is None
    assert v.current is not None


def test_confirm_waits_for_delta3_and_delta4():
    v, keys = make_verifier(delays=DelayProfile(delta3=1e-6, delta4=2e-6))
    T = to_ps(1e-3)
    v.emit_query(1, T)
    c = v.handle_reply(Reply(1, 1, keys.round(1).reply_part), T)
    assert c.emit_ps == T + to_ps(3e-6)


def test_deadline_closes_round_once():
    v, keys, _, T, arrival = honest_exchange()
    c = v.on_deadline(1, v.deadline_ps(T) + 1)
    assert (c.s, c.reason) == (0, LATE)
    assert v.on_deadline(1, v.deadline_ps(T) + 2) is None
    assert v.handle_reply(Reply(1, 1, keys.round(1).reply_part), arrival) is None


# -- master ----------------------------------------------------------------


def confirm(i, j, s, radius=1100.0, x=None):
    center = Position((x if x is not None else (-1000.0 if i == 1 else 1000.0),))
    return Confirm(i, j, s, OK if s else AUTH, Ball(center, radius) if s else None, source=f"A{i}")


def master(M=2):
    xs = [-1000.0, 1000.0, -2000.0, 2000.0][:M]
    return Master([Position((x,)) for x in xs], Position((0.0,)), delta5=1e-6)


def test_unanimous_confirmations_verify():
    a0 = master()
    assert not a0.receive(confirm(1, 1, 1), 10 * US)
    assert a0.receive(confirm(2, 1, 1), 12 * US)
    rep = a0.aggregate(1, 0)
    assert rep.verified and rep.reason == OK
    assert rep.completion_time == pytest.approx(13e-6)
    assert rep.region_diameter == pytest.approx(200.0)
    assert rep.expected_in_region


def test_one_refusal_fails_the_round():
    a0 = master()
    a0.receive(confirm(1, 1, 1), 0)
    a0.receive(confirm(2, 1, 0), 0)
    rep = a0.aggregate(1, 0)
    assert not rep.verified and rep.reason == AUTH


def test_missing_confirmation_after_timeout():
    a0 = master(4)
    for i, x in zip((1, 2, 3), (-1000.0, 1000.0, -2000.0)):
        a0.receive(confirm(i, 1, 1, radius=2500.0, x=x), 0)
    rep = a0.aggregate(1, 0, now_ps=50 * US)
    assert not rep.verified and rep.reason == MISSING
    assert rep.completion_time == pytest.approx(50e-6)


def test_late_confirm_after_decision_is_ignored():
    a0 = master()
    a0.aggregate(1, 0, now_ps=1)
    assert not a0.receive(confirm(1, 1, 1), 5)


def test_disjoint_balls_cannot_verify():
    a0 = master()
    a0.receive(confirm(1, 1, 1, radius=10.0), 0)
    a0.receive(confirm(2, 1, 1, radius=10.0), 0)
    rep = a0.aggregate(1, 0)
    assert not rep.verified and rep.region_empty


# -- schedule and wire format -------------------------------------------------


def test_schedule_visibility():
    plain = distribute_schedule([1.0, 2.0, 3.0])
    assert plain.adversary_view() == {"encrypted": False, "times": [1.0, 2.0, 3.0]}
    secret = distribute_schedule([1.0, 2.0, 3.0], encrypted=True)
    view = secret.adversary_view()
    assert view["encrypted"] and view["count"] == 3 and "times" not in view
    with pytest.raises(ConfigurationError):
        distribute_schedule([2.0, 1.0])


def test_wire_forms():
    assert Confirm(3, 7, 1).wire() == "CONFIRM 3 7 1"
    assert Schedule((0.001, 0.0025)).wire() == "SCHEDULE 2 0.001 0.0025"
    assert Reply(1, 2, BitString.from_str("0110")).wire() == "REPLY 1 2 0110"
    with pytest.raises(UsageError):
        parse_wire("QUERY 1")


@given(
    st.integers(1, 99),
    st.integers(1, 999),
    st.lists(st.integers(0, 1), min_size=1, max_size=40),
)
def test_wire_round_trip(i, j, bits):
    b = BitString.from_array(bits)
    for msg in (Query(i, j, b), Reply(i, j, b), Confirm(i, j, bits[0])):
        assert parse_wire(msg.wire()).wire() == msg.wire()


# -- trace properties ----------------------------------------------------------

events = st.lists(
    st.tuples(st.integers(1, 2), st.integers(1, 5), st.sampled_from(["good", "bad"])), max_size=30
)


@given(events)
def test_lockout_is_monotone_and_replies_unique(trace):
    keys = {1: block(1, N=5), 2: block(2, N=5)}
    prover = Prover(keys, 0)
    sent = []
    locked_at = None
    for t, (i, j, kind) in enumerate(trace):
        q = keys[i].round(j).query_part
        if kind == "bad":
            q = q.flipped([t % 4])
        reply = prover.handle_query(Query(i, j, q), t)
        if locked_at is not None:
            assert reply is None
        if prover.locked_out and locked_at is None:
            locked_at = t
        if reply is not None:
            sent.append(str(reply.r) + f"/{i}/{j}")
    assert len(sent) == len(set(sent))
    assert prover.locked_out == (locked_at is not None)


@given(st.lists(st.tuples(st.integers(1, 4), st.booleans()), max_size=25))
def test_verifier_never_confirms_a_round_twice(deliveries):
    v, keys = make_verifier(tolerance=0.0)
    T = 0
    for k, (j, advance) in enumerate(deliveries):
        if advance and v.last_round < keys.N:
            T = (v.last_round + 1) * 100 * US
            v.emit_query(v.last_round + 1, T)
        v.handle_reply(Reply(1, j, keys.round(j).reply_part), T)
    ones = [j for j, s in v.confirmed if s == 1]
    assert len(ones) == len(set(ones))
    assert all(j1 < j2 for (j1, _), (j2, _) in zip(v.confirmed, v.confirmed[1:]))
