import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from posverify.errors import ConfigurationError, UsageError
from posverify.spacetime import (
    SPEED_OF_LIGHT,
    ClockModel,
    DelayProfile,
    Position,
    ResyncingClock,
    Trajectory,
    clock_reading,
    clock_true_time,
    movement_bound,
    propagation_ps,
    propagation_time,
    scheme1_uncertainty,
    scheme2_uncertainty,
    timing_ball_uncertainty,
    to_ps,
)

coord = st.floats(-1e6, 1e6, allow_nan=False)
point3 = st.tuples(coord, coord, coord).map(Position)


def test_propagation_examples():
    assert propagation_time(Position((0.0,)), Position((SPEED_OF_LIGHT,))) == 1.0
    assert propagation_time(Position((5.0, 5.0)), Position((5.0, 5.0))) == 0.0
    assert propagation_time(Position((0.0,)), Position((150.0,))) == pytest.approx(5.0035e-7, rel=1e-4)
    with pytest.raises(UsageError):
        propagation_time(Position((0.0,)), Position((0.0, 1.0)))


def test_propagation_ps_rounds_up():
    t = propagation_ps(150.0)
    assert t / 1e12 >= 150.0 / SPEED_OF_LIGHT
    assert t - 1 < 150.0 / SPEED_OF_LIGHT * 1e12


@given(point3, point3, point3)
def test_propagation_symmetric_and_triangle(a, b, c):
    assert propagation_time(a, b) == propagation_time(b, a)
    assert propagation_time(a, c) <= propagation_time(a, b) + propagation_time(b, c) + 1e-15


def test_uncertainty_figures():
    assert scheme1_uncertainty(DelayProfile(0.25e-6, 0.25e-6)) == pytest.approx(149.896, abs=1e-3)
    assert scheme1_uncertainty(DelayProfile(5e-9, 5e-9)) == pytest.approx(2.998, abs=1e-3)
    assert scheme1_uncertainty(DelayProfile()) == 0
    assert timing_ball_uncertainty(DelayProfile(1e-7, 1e-7, 1.0, 1.0)) == pytest.approx(59.958, abs=1e-3)
    assert scheme2_uncertainty(0, 0, 0) == 0
    assert scheme2_uncertainty(1e-6, 0, 0) == pytest.approx(299.792458)
    assert scheme2_uncertainty(0.5e-6, 0.25e-6, 0.25e-6) == pytest.approx(299.792458)


@given(st.lists(st.floats(0, 1e-3), min_size=4, max_size=4), st.integers(0, 3), st.floats(0, 1e-3))
def test_uncertainty_monotone(deltas, k, bump):
    base = DelayProfile(*deltas)
    bumped = list(deltas)
    bumped[k] += bump
    assert scheme1_uncertainty(DelayProfile(*bumped)) >= scheme1_uncertainty(base)


def test_movement_bound_figures():
    assert movement_bound(1e-6, SPEED_OF_LIGHT) == pytest.approx(299.79, abs=0.005)
    assert movement_bound(1e-6, 343) == pytest.approx(3.43e-4)
    assert movement_bound(1e-3, 343) == pytest.approx(0.343)
    with pytest.raises(UsageError):
        movement_bound(0, 343)


def test_clock_examples():
    assert clock_reading(ClockModel(), 5.0) == 5.0
    assert clock_reading(ClockModel(offset=2.0), 10.0) == 12.0
    assert clock_reading(ClockModel(drift=1e-6), 1e6) == pytest.approx(1e6 + 1)
    with pytest.raises(ConfigurationError):
        ClockModel(drift=-1.0)


@given(st.floats(-10, 10), st.floats(-1e-3, 1e-3), st.floats(-1e3, 1e3), st.floats(0, 1e4))
def test_clock_inverse(offset, drift, epoch, t):
    clock = ClockModel(offset, drift, epoch)
    back = clock_true_time(clock, clock_reading(clock, t))
    assert abs(back - t) <= 1e-12 * max(1.0, abs(t), abs(epoch), abs(offset))


@given(st.floats(-1e-3, 1e-3), st.floats(-1e-4, 1e-4), st.integers(0, 10**12))
def test_clock_ps_inverse_is_earliest(offset, drift, reading):
    clock = ClockModel(offset, drift)
    t = clock.true_ps(reading)
    assert clock.reading_ps(t) >= reading
    assert clock.reading_ps(t - 1) < reading


def test_resyncing_clock():
    clock = ResyncingClock(ClockModel(offset=1e-6), period=1e-3)
    assert clock.reading(0.5e-3) == pytest.approx(0.5e-3 + 1e-6)
    assert clock.reading(1.5e-3) == pytest.approx(1.5e-3)
    t = clock.true_ps(to_ps(2e-3))
    assert clock.reading_ps(t) >= to_ps(2e-3)


def test_delay_profile_validation():
    with pytest.raises(ConfigurationError):
        DelayProfile(delta1=-1e-9)
    with pytest.raises(ConfigurationError):
        DelayProfile(delta2=math.inf)


def test_trajectory():
    traj = Trajectory(Position((0.0, 0.0))).with_leg(1.0, 2.0, (3.0, 0.0))
    assert traj.at(0.5) == Position((0.0, 0.0))
    assert traj.at(2.0) == Position((3.0, 0.0))
    assert traj.at(10.0) == Position((6.0, 0.0))
    assert traj.max_speed() == 3.0
    with pytest.raises(ConfigurationError):
        traj.with_leg(0, 1, (1.0,))
