from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_headroom, two_node
from tdfreq.distribution import DerSite, FeederNetwork, solve_feeder
from tdfreq.headroom import VsmMatrix, build_vsm, refresh_policy, solve_headroom_lp

DATA = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "feeders"


def with_der(feeder, node="n2", phases="a", rating=2.0):
    return FeederNetwork(feeder.name, feeder.v_base_kv, feeder.source, feeder.branches, feeder.loads,
                         [DerSite("g", node, phases, rating)])


def test_two_bus_sensitivity_matches_analytic_derivative():
    r = 0.01
    f = with_der(two_node(r + 0.02j, 300 + 100j))
    vsm = build_vsm(f, 1.0, {"g": 0.2}, delta=0.01)
    v2 = abs(solve_feeder(f, 1.0, {"g": 0.2}).v[1, 0])
    assert vsm.j.shape == (1, 1)
    assert vsm.j[0, 0] == pytest.approx(r / v2, rel=0.05)


def test_zero_impedance_feeder_has_zero_sensitivity():
    f = with_der(two_node(0.0, 300 + 100j))
    vsm = build_vsm(f, 1.0, {"g": 0.2})
    assert np.all(vsm.j == 0)


def test_halving_delta_changes_sensitivity_by_order_delta():
    f = with_der(two_node(0.05 + 0.05j, 300 + 100j))
    a = build_vsm(f, 1.0, {"g": 0.1}, delta=0.02).j[0, 0]
    b = build_vsm(f, 1.0, {"g": 0.1}, delta=0.01).j[0, 0]
    c = build_vsm(f, 1.0, {"g": 0.1}, delta=0.005).j[0, 0]
    # forward differences: successive gaps shrink by about half
    assert abs(b - c) == pytest.approx(abs(a - b) / 2, rel=0.1)
    assert abs(a - b) < 0.02 * abs(b)


def single_der_vsm(v_base, sens, p_base=0.5):
    return VsmMatrix(np.array([[sens]]), np.array([v_base]), np.array([p_base]), ["g"], [("n2", "a")], 0.01)


def test_box_constraint_binds_with_slack_voltage():
    res = solve_headroom_lp(single_der_vsm(1.0, 1e-3), p_cap=np.array([0.9]))
    assert res.status == "optimal"
    assert res.headroom == pytest.approx(0.4, abs=1e-9)
    assert "P<=cap:g" in res.binding
    assert res.limits(np.array([0.5]))[0] == pytest.approx(0.9)


def test_voltage_at_upper_limit_gives_zero_headroom():
    res = solve_headroom_lp(single_der_vsm(1.05, 0.02), p_cap=np.array([0.9]))
    assert res.headroom == pytest.approx(0.0, abs=1e-9)
    assert res.delta_p[0] == pytest.approx(0.0, abs=1e-9)
    assert any(b.startswith("V<=") for b in res.binding)


def test_infeasible_base_reports_zero():
    res = solve_headroom_lp(single_der_vsm(1.07, 0.02), p_cap=np.array([0.9]))
    assert res.status == "infeasible-base" and res.headroom == 0.0 and res.message


def test_zero_der_feeder_headroom_is_exactly_zero(balanced_feeder):
    f = FeederNetwork("none", 12.47, "s", balanced_feeder.branches, balanced_feeder.loads)
    res = solve_headroom_lp(build_vsm(f, 1.0, {}))
    assert res.headroom == 0.0 and res.status == "no-ders"


def test_current_limit_enters_lp(balanced_feeder):
    vsm = build_vsm(balanced_feeder, 1.0, {"d1": 0.3})
    free = solve_headroom_lp(vsm, p_cap=np.array([0.9]), current_limits=False)
    tight = VsmMatrix(**{**vsm.__dict__, "ampacity": vsm.i_base + 1.0})
    # injection reduces l1/l2 flow first; a 1 A margin still allows some reverse growth
    res = solve_headroom_lp(tight, p_cap=np.array([0.9]))
    assert res.headroom <= free.headroom + 1e-9
    assert np.all(tight.j_current @ res.delta_p <= tight.ampacity - tight.i_base + 1e-7)


def test_refresh_policy():
    assert refresh_policy(0.0, None)
    assert not refresh_policy(9.0, 0.0)
    assert refresh_policy(10.0, 0.0)


@st.composite
def lp_cases(draw):
    n = draw(st.integers(1, 6))
    m = draw(st.integers(1, 4))
    j = np.array([[draw(st.floats(-0.05, 0.1)) for _ in range(m)] for _ in range(n)])
    v = np.array([draw(st.floats(0.96, 1.04)) for _ in range(n)])
    p = np.array([draw(st.floats(0.0, 0.8)) for _ in range(m)])
    cap = p + np.array([draw(st.floats(0.0, 1.0)) for _ in range(m)])
    vsm = VsmMatrix(j, v, p, [f"d{i}" for i in range(m)], [(f"n{i}", "a") for i in range(n)], 0.01)
    return vsm, cap


@settings(max_examples=150, deadline=None)
@given(lp_cases(), st.floats(1.0, 1.1))
def test_lp_feasible_and_monotone_in_upper_limit(case, v_hi):
    vsm, cap = case
    hi = max(v_hi, float(vsm.v_base.max()))
    res = solve_headroom_lp(vsm, v_hi=hi, p_cap=cap)
    assert res.status == "optimal" and res.headroom >= 0
    v = vsm.v_base + vsm.j @ res.delta_p
    assert np.all(v <= hi + 1e-6) and np.all(v >= 0.95 - 1e-6)
    p = vsm.p_base + res.delta_p
    assert np.all(p >= -1e-6) and np.all(p <= cap + 1e-6)
    relaxed = solve_headroom_lp(vsm, v_hi=hi + 0.01, p_cap=cap)
    assert relaxed.headroom >= res.headroom - 1e-7


def test_six_node_lp_matches_brute_force():
    feeder = FeederNetwork.from_yaml(DATA / "six_node.yaml")
    base = {"der1": 0.5, "der2": 0.5}
    vsm = build_vsm(feeder, 1.0, base)
    res = solve_headroom_lp(vsm, p_cap=np.full(2, 0.9), current_limits=False)
    lp_total = float((vsm.p_base + res.delta_p).sum())
    exact_total = brute_force_headroom(feeder, 1.0, 0.9)
    assert exact_total < 1.8  # voltage binds before both DERs reach nameplate
    assert lp_total == pytest.approx(exact_total, rel=0.05)
    point = dict(zip(vsm.der_ids, vsm.p_base + res.delta_p))
    vm = np.abs(solve_feeder(feeder, 1.0, point).v[1:][feeder.present[1:]])
    assert vm.max() <= 1.05 and vm.min() >= 0.95
