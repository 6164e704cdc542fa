from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from tdfreq.transmission import (
    Boundary,
    Bus,
    Event,
    Generator,
    Governor,
    Grid,
    GridError,
    Islanded,
    LastSourceTrip,
    Line,
    PowerFlowError,
    TransmissionDae,
    coi_frequency,
    measure_frequency,
    solve_power_flow,
)
from tdfreq.transmission.dynamics import WB

GRIDS = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "grids"


def wscc9(**changes) -> Grid:
    g = Grid.from_yaml(GRIDS / "wscc9.yaml")
    for k, v in changes.items():
        setattr(g, k, v)
    return g


def two_bus(load=complex(100, 50), boundary=False, **gen):
    gen = {"p_mw": 0.0, "h": 5.0, **gen}
    return Grid(
        "two_bus",
        [Bus("1", "slack", 1.0), Bus("2", p_load=load.real, q_load=load.imag)],
        [Line("1", "2", 0.0, 0.1)],
        [Generator("G", "1", **gen)],
        [Boundary("2", "f")] if boundary else [],
    )


def gauss_seidel_v2(s_load, x, tol=1e-15):
    y = 1 / (1j * x)
    v2 = 1.0 + 0j
    for _ in range(10000):
        new = (np.conj(-s_load) / np.conj(v2) + y * 1.0) / y
        if abs(new - v2) < tol:
            return new
        v2 = new
    raise AssertionError("Gauss-Seidel did not converge")


# -- power flow ------------------------------------------------------------------


def test_two_bus_matches_gauss_seidel():
    pf = solve_power_flow(two_bus())
    v2 = gauss_seidel_v2(1 + 0.5j, 0.1)
    assert abs(abs(pf.v[1]) - abs(v2)) < 1e-8
    assert abs(np.angle(pf.v[1]) - np.angle(v2)) < 1e-8


def test_zero_load_is_flat():
    pf = solve_power_flow(two_bus(load=0j))
    assert np.all(pf.v == 1.0)


def test_islanded_bus():
    g = two_bus()
    g.buses.append(Bus("3", p_load=10.0))
    g.index["3"] = 2
    with pytest.raises(Islanded) as err:
        solve_power_flow(g)
    assert err.value.buses == ["3"]


def test_nonconvergence_names_worst_bus():
    with pytest.raises(PowerFlowError) as err:
        solve_power_flow(two_bus(load=complex(2000, 1000)))
    assert err.value.worst_bus == "2"


def test_wscc9_textbook_dispatch():
    pf = solve_power_flow(wscc9())
    assert pf.s_gen["G1"].real * 100 == pytest.approx(71.64, abs=0.01)
    assert pf.s_gen["G1"].imag * 100 == pytest.approx(27.05, abs=0.01)
    assert abs(pf.v[4]) == pytest.approx(0.9956, abs=1e-4)  # bus 5


# -- integration ----------------------------------------------------------------


def test_constant_accelerating_power_step():
    # single machine serving a constant-power load: Pe stays equal to the load
    g = two_bus(load=complex(50, 10), h=5.0)
    g.load_model = "P"
    dae = TransmissionDae(g)
    dae.apply_event(Event("setpoint_change", "G", 0.0, 10.0))  # +0.1 pu mechanical power
    dae.step()
    assert dae.omega[0] - 1.0 == pytest.approx(0.1 * (1 / 30) / 10, rel=1e-9)


def test_equilibrium_is_a_fixed_point():
    dae = TransmissionDae(wscc9())
    x0, y0 = dae.x.copy(), dae.y.copy()
    for _ in range(60):
        dae.step()
    assert np.max(np.abs(dae.x - x0)) <= 1e-12
    assert np.max(np.abs(dae.y - y0)) <= 1e-12
    assert measure_frequency(dae) == pytest.approx(60.0, abs=1e-12)


def kron_oracle(dae, t_end, substeps=10):
    """RK4 on the index-reduced ODE: loads are admittances, network eliminated."""
    p, n = dae.p, dae.n
    ng = len(dae.gen_ids)
    y = dae.y_net + np.diag(dae.y_load)
    aug = np.zeros((ng + n, ng + n), dtype=complex)
    yg = 1 / (1j * p.xd)
    for i, k in enumerate(p.gbus):
        aug[i, i] += yg[i]
        aug[i, ng + k] -= yg[i]
        aug[ng + k, i] -= yg[i]
        aug[ng + k, ng + k] += yg[i]
    aug[ng:, ng:] += y
    yred = aug[:ng, :ng] - aug[:ng, ng:] @ np.linalg.solve(aug[ng:, ng:], aug[ng:, :ng])

    def rhs(s):
        d, w, pm = s[:ng], s[ng:2 * ng], s[2 * ng:]
        e = p.e * np.exp(1j * d)
        pe = (e * np.conj(yred @ e)).real
        tgt = np.clip(dae.pref - p.r_inv * (w - 1), p.pmin, p.pmax)
        return np.concatenate([WB * (w - 1), (pm - pe - p.d * (w - 1)) / (2 * p.h), (tgt - pm) / p.tg])

    h = dae.dt / substeps
    s = np.concatenate([dae.delta, dae.omega, dae.pm])
    out = []
    for _ in range(int(round(t_end / dae.dt))):
        for _ in range(substeps):
            k1 = rhs(s)
            k2 = rhs(s + h / 2 * k1)
            k3 = rhs(s + h / 2 * k2)
            k4 = rhs(s + h * k3)
            s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(s[ng:2 * ng].copy())
    return np.array(out)


def test_three_machine_load_step_matches_rk4_oracle():
    dae = TransmissionDae(wscc9())
    dae.apply_event(Event("load_scale", "5", 0.0, 1.08))  # +10 MW at bus 5
    oracle = kron_oracle(dae, 10.0)
    ours = []
    for _ in range(len(oracle)):
        dae.step()
        ours.append(dae.omega.copy())
    err = np.max(np.abs(np.array(ours) - oracle))
    assert np.max(np.abs(oracle - 1)) > 5e-4  # the disturbance is visible
    assert err < 1e-4


def test_coi_examples():
    assert coi_frequency([1.0, 2.0], [1.0, 1.0]) == pytest.approx(60.0)
    assert coi_frequency([5, 5], [1.001, 0.999]) == pytest.approx(60.0, abs=1e-12)
    assert coi_frequency([9, 1], [1.001, 0.999]) == pytest.approx(60.048, abs=1e-9)


def lossless(grid: Grid) -> Grid:
    grid.lines = [replace(ln, r=0.0) for ln in grid.lines]
    grid.load_model = "P"
    return grid


def two_machine() -> Grid:
    return Grid(
        "two_machine",
        [Bus("1", "slack", 1.0), Bus("2", "pv", 1.0), Bus("3", p_load=150.0, q_load=30.0)],
        [Line("1", "3", 0.0, 0.08), Line("2", "3", 0.0, 0.1)],
        [
            Generator("A", "1", 80.0, 200.0, 4.0, 2.0, 0.3, Governor(0.05, 0.5, 200.0)),
            Generator("B", "2", 70.0, 100.0, 3.0, 2.0, 0.25, Governor(0.04, 0.4, 100.0)),
        ],
        load_model="P",
    )


@pytest.mark.parametrize("make", [two_machine, lambda: lossless(wscc9())], ids=["two_machine", "wscc9"])
def test_governor_droop_settling(make):
    dae = TransmissionDae(make())
    first = dae.gen_ids[0]
    dae.apply_event(Event("setpoint_change", first, 0.0, -10.0))
    for _ in range(int(60 / dae.dt)):
        dae.step()
    expected = -(-0.1) / (dae.p.r_inv.sum() + dae.p.d.sum())
    assert np.ptp(dae.omega) < 1e-6
    assert (dae.omega.mean() - 1) == pytest.approx(-expected, rel=0.01)


def test_trapezoidal_energy_balance():
    g = wscc9()
    g.generators = [replace(gen, governor=None, d=0.0) for gen in g.generators]
    dae = TransmissionDae(g)
    dae.apply_event(Event("load_scale", "6", 0.0, 1.2))
    h = dae.p.h
    w0 = dae.omega.copy()
    pa = dae.pm - dae.electrical_power()
    work = 0.0
    for _ in range(int(10 / dae.dt)):
        w_prev, pa_prev = dae.omega.copy(), pa
        dae.step()
        pa = dae.pm - dae.electrical_power()
        work += dae.dt / 4 * np.sum((pa_prev + pa) * (w_prev + dae.omega))
    kinetic = np.sum(h * (dae.omega**2 - w0**2))
    assert np.max(np.abs(dae.omega - 1)) > 1e-4
    assert abs(kinetic - work) <= 1e-6


def test_algebraic_consistency_after_steps():
    dae = TransmissionDae(wscc9())
    dae.schedule([Event("load_scale", "8", 0.2, 1.3)])
    for _ in range(30):
        dae.step()
        assert dae.algebraic_residual() <= 1e-8


# -- events ---------------------------------------------------------------------


def test_event_applies_at_first_step_at_or_after_time():
    dae = TransmissionDae(wscc9())
    dae.schedule([Event("generator_trip", "G3", 0.05)])
    dae.step()
    assert not dae.applied_events
    dae.step()
    dae.step()
    assert len(dae.applied_events) == 1
    assert dae.applied_events[0][0] == pytest.approx(2 / 30)
    assert not dae.online[2]


def test_trip_beyond_stop_is_noop():
    dae = TransmissionDae(wscc9())
    dae.schedule([Event("generator_trip", "G3", 100.0)])
    for _ in range(30):
        dae.step()
    assert dae.online.all() and not dae.applied_events


def test_trip_errors():
    g = two_bus()
    dae = TransmissionDae(g)
    with pytest.raises(LastSourceTrip):
        dae.apply_event(Event("generator_trip", "G", 0.0))
    with pytest.raises(GridError):
        dae.schedule([Event("generator_trip", "nope", 1.0)])
    with pytest.raises(ValueError):
        Event("explode", "G", 1.0)


def test_trip_conserves_injection_minus_losses():
    dae = TransmissionDae(wscc9())
    dae.apply_event(Event("generator_trip", "G3", 0.0))
    v = dae.v
    gen = dae.electrical_power().sum()
    load = np.sum(dae.y_load.real * np.abs(v) ** 2)
    losses = np.sum(v * np.conj(dae.y_net @ v)).real
    assert dae.electrical_power()[2] == 0.0
    assert abs(gen - load - losses) <= 1e-8
    assert dae.algebraic_residual() <= 1e-8


def test_tripped_generator_is_frozen():
    dae = TransmissionDae(wscc9())
    dae.apply_event(Event("generator_trip", "G2", 0.0))
    frozen = dae.omega[1], dae.delta[1]
    for _ in range(30):
        dae.step()
    assert (dae.omega[1], dae.delta[1]) == frozen
    assert dae.frequency() < 60.0


def test_boundary_interface():
    g = two_bus(load=0j, boundary=True)
    dae = TransmissionDae(g)
    assert dae.get_boundary_voltage("2") == 1.0
    with pytest.raises(GridError):
        dae.set_boundary_load("1", 1.0)
    with pytest.raises(GridError):
        dae.get_boundary_voltage("1")
    dae.set_boundary_load("2", 10 + 3j)
    dae.resolve_algebraic()
    seen = []
    for _ in range(30):
        seen.append(dae._s_inject().copy())
        dae.step()
    assert all(np.array_equal(s, seen[0]) for s in seen)
    assert seen[0][1] == pytest.approx(-(0.1 + 0.03j))
