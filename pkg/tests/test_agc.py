import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdfreq.agc import (
    AgcAreaState,
    ParticipationError,
    ParticipationTable,
    compute_ace,
    dispatch_participation,
    pi_update,
)


def test_ace_examples():
    assert compute_ace(60.0, AgcAreaState(b=7.0)) == 0.0
    assert compute_ace(59.95, AgcAreaState(b=20.0, f_db=0.0)) == pytest.approx(10.0)
    assert compute_ace(60.005, AgcAreaState(b=20.0, f_db=0.01)) == 0.0
    assert compute_ace(60.05, AgcAreaState(b=20.0, f_db=0.0)) == pytest.approx(-10.0)
    with pytest.raises(ValueError):
        compute_ace(float("inf"), AgcAreaState(b=1.0))


def test_area_validation():
    with pytest.raises(ValueError):
        AgcAreaState(b=0.0)
    with pytest.raises(ValueError):
        AgcAreaState(b=1.0, f_db=-0.1)
    with pytest.raises(ValueError):
        AgcAreaState(b=1.0, signal_period=4.0, measurement_period=0.3)


def run_ticks(area, aces):
    return [pi_update_at(area, a) for a in aces]


def pi_update_at(area, ace):
    return pi_update(area, ace, 0.5)


def test_zero_ace_gives_zero_signal():
    area = AgcAreaState(b=20.0)
    assert run_ticks(area, [0.0] * 40) == [0.0] * 40


def test_integral_closed_form_and_hold():
    area = AgcAreaState(b=20.0, kp=0.0, ki=0.1)
    signals = run_ticks(area, [10.0] * 16)  # ticks at 0.5 .. 8.0 s
    times = [0.5 * (k + 1) for k in range(16)]
    at = dict(zip(times, signals))
    assert at[3.5] == 0.0
    assert at[4.0] == pytest.approx(4.0)
    assert all(at[t] == pytest.approx(4.0) for t in times if 4.0 <= t < 8.0)
    assert at[8.0] == pytest.approx(8.0)


def test_proportional_step_waits_for_grid():
    area = AgcAreaState(b=20.0, kp=1.0, ki=0.0)
    signals = run_ticks(area, [10.0] * 8)
    assert signals[:7] == [0.0] * 7 and signals[7] == 10.0


def test_anti_windup_clamps_integral_term():
    area = AgcAreaState(b=20.0, kp=0.0, ki=0.1, windup_limit=2.0)
    signals = run_ticks(area, [10.0] * 40)
    assert max(signals) == pytest.approx(2.0)


@settings(max_examples=100)
@given(st.lists(st.floats(59.983, 60.017), min_size=1, max_size=60))
def test_deadband_trajectory_gives_identically_zero_signal(freqs):
    area = AgcAreaState(b=20.0, kp=0.3, ki=0.2)
    assert all(pi_update_at(area, compute_ace(f, area)) == 0.0 for f in freqs)


@settings(max_examples=100)
@given(st.lists(st.floats(-50, 50), min_size=8, max_size=80))
def test_signal_changes_only_on_hold_grid(aces):
    area = AgcAreaState(b=20.0, kp=0.2, ki=0.1)
    signals = run_ticks(area, aces)
    for k in range(1, len(signals)):
        if signals[k] != signals[k - 1]:
            assert (k + 1) % 8 == 0


def test_dispatch_examples():
    table = ParticipationTable({**{f"g{i}": 0.225 for i in range(4)}, **{f"der{i}": 0.005 for i in range(20)}})
    out = dispatch_participation(10.0, table)
    assert all(out[f"der{i}"] == pytest.approx(0.05) for i in range(20))
    assert sum(out[f"g{i}"] for i in range(4)) == pytest.approx(9.0)
    assert all(v == 0 for v in dispatch_participation(0.0, table).values())
    assert dispatch_participation(3.7, ParticipationTable({"only": 1.0})) == {"only": 3.7}


def test_participation_validation():
    with pytest.raises(ParticipationError):
        ParticipationTable({})
    with pytest.raises(ParticipationError):
        ParticipationTable({"a": 0.5, "b": 0.4})
    with pytest.raises(ParticipationError):
        ParticipationTable({"a": 1.2, "b": -0.2})


@settings(max_examples=200)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30), st.floats(-500, 500))
def test_dispatch_conserves_signal(weights, signal):
    w = np.array(weights) / np.sum(weights)
    w[-1] = 1.0 - w[:-1].sum()
    if w[-1] < 0:
        return
    table = ParticipationTable({f"u{i}": float(x) for i, x in enumerate(w)})
    out = dispatch_participation(signal, table)
    assert abs(sum(out.values()) - signal) <= 4 * np.finfo(float).eps * max(1.0, abs(signal))
