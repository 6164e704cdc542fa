from pathlib import Path

import numpy as np
import pytest

from tdfreq.distribution import Branch, DerSite, FeederNetwork, Load, solve_feeder
from tdfreq.scenario import load_scenario, run


def line_z(zs, zm=0.0):
    z = np.full((3, 3), zm, dtype=complex)
    np.fill_diagonal(z, zs)
    return z


def two_node(z_ohm, s_kva, phases="a", v_base_kv=np.sqrt(3.0)):
    """Source plus one load node; v_base_kv=sqrt(3) gives a 1 kV line-to-neutral base."""
    mask = np.array([p in phases for p in "abc"])
    z = np.where(np.outer(mask, mask), line_z(z_ohm), 0.0)
    load = np.where(mask, s_kva, 0.0).astype(complex)
    return FeederNetwork(
        "two_node", v_base_kv, "src", [Branch("l1", "src", "n2", z, phases)], [Load("n2", load)]
    )


def quadratic_two_bus(v1, z, s):
    """Closed-form receiving-end voltage of a two-bus line feeding constant power s."""
    k = abs(v1) ** 2 - 2 * (z.real * s.real + z.imag * s.imag)
    u = (k + np.sqrt(k * k - 4 * abs(z) ** 2 * abs(s) ** 2)) / 2
    return np.conj(u + z * np.conj(s)) / np.conj(v1)


def brute_force_headroom(feeder, v_sub, p_cap, step=0.01, v_lo=0.95, v_hi=1.05):
    grid = np.round(np.arange(0.0, p_cap + 1e-9, step), 10)
    best = 0.0
    for p1 in grid:
        for p2 in grid:
            sol = solve_feeder(feeder, v_sub, {"der1": p1, "der2": p2})
            vm = np.abs(sol.v[1:][feeder.present[1:]])
            if vm.max() <= v_hi and vm.min() >= v_lo:
                best = max(best, p1 + p2)
    return best


@pytest.fixture
def balanced_feeder():
    zs, zm = 0.3 + 0.6j, 0.1 + 0.25j
    branches = [
        Branch("l1", "s", "n1", line_z(zs, zm)),
        Branch("l2", "n1", "n2", line_z(zs, zm)),
        Branch("l3", "n1", "n3", line_z(zs, zm) * 0.5),
    ]
    loads = [Load("n2", np.full(3, 300 + 100j)), Load("n3", np.full(3, 150 + 80j))]
    ders = [DerSite("d1", "n2", "abc", 0.9)]
    return FeederNetwork("balanced", 12.47, "s", branches, loads, ders)


@pytest.fixture
def unbalanced_feeder():
    zs, zm = 0.4 + 0.8j, 0.12 + 0.3j
    single = np.zeros((3, 3), dtype=complex)
    single[1, 1] = 0.5 + 0.4j
    branches = [
        Branch("l1", "s", "n1", line_z(zs, zm)),
        Branch("l2", "n1", "n2", line_z(zs, zm)),
        Branch("l3", "n1", "n3", single, "b"),
        Branch("l4", "n2", "n4", line_z(zs, zm) * 0.7),
    ]
    loads = [
        Load("n2", np.array([400 + 150j, 250 + 90j, 310 + 120j])),
        Load("n3", np.array([0, 120 + 40j, 0])),
        Load("n4", np.array([90 + 20j, 200 + 60j, 50 + 10j])),
    ]
    ders = [DerSite("d1", "n4", "abc", 0.9), DerSite("d2", "n3", "b", 0.2)]
    return FeederNetwork("unbalanced", 12.47, "s", branches, loads, ders)


SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "scenarios"
SHIPPED = ("quiescent", "load_noise_agc", "trip_agc", "trip_no_agc", "scale10", "headroom_binding")


@pytest.fixture(scope="session")
def scenario_run():
    """Run a shipped scenario once per session; later calls reuse the results."""
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run(load_scenario(SCENARIOS / f"{name}.yaml"))
        return cache[name]

    return get
