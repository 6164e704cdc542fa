"""DER active-power headroom from a perturbation-built voltage sensitivity matrix.

The sensitivity matrix is built by re-solving the feeder once per DER with a
small extra injection at that DER; the headroom is the optimum of a linear
program maximizing total DER output subject to linearized voltage and branch
current limits plus per-DER capacity bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .distribution.feeder import PHASES, FeederConvergenceError, FeederNetwork, FeederSolution, solve_feeder

LP_TOL = 1e-9
FEAS_TOL = 1e-9


class VsmBuildError(Exception):
    def __init__(self, failures: dict[str, str]):
        self.failures = failures
        super().__init__("perturbed power flow failed for: " + ", ".join(f"{k} ({v})" for k, v in failures.items()))


@dataclass
class VsmMatrix:
    j: np.ndarray  # (n, m) pu per MW
    v_base: np.ndarray  # (n,) pu
    p_base: np.ndarray  # (m,) MW
    der_ids: list[str]
    monitored: list[tuple[str, str]]  # (node, phase) per row
    delta: float
    built_at: float = 0.0
    j_current: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (k, m) A per MW
    i_base: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ampacity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    current_labels: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class HeadroomResult:
    delta_p: np.ndarray
    headroom: float
    binding: list[str]
    status: str
    message: str = ""

    def limits(self, p_base: np.ndarray) -> np.ndarray:
        """Per-DER absolute output limit, MW."""
        return np.asarray(p_base) + self.delta_p


def _monitor_mask(feeder: FeederNetwork, monitor: str) -> np.ndarray:
    mask = feeder.present.copy()
    mask[0] = False  # source voltage is imposed by the transmission side
    if monitor == "ders":
        keep = np.zeros_like(mask)
        for d in feeder.ders:
            keep[feeder.index[d.node]] = mask[feeder.index[d.node]]
        mask = keep
    elif monitor != "all":
        raise ValueError(f"monitor must be 'all' or 'ders', got {monitor!r}")
    return mask


def build_vsm(
    feeder: FeederNetwork,
    v_sub: complex,
    der_p: dict[str, float],
    load_multiplier: float = 1.0,
    delta: float = 0.01,
    built_at: float = 0.0,
    monitor: str = "all",
    base: FeederSolution | None = None,
) -> VsmMatrix:
    """Forward-difference sensitivities of node voltage magnitudes to each DER's output."""
    if delta <= 0:
        raise ValueError("perturbation must be positive")
    der_ids = [d.id for d in feeder.ders]
    p_base = np.array([float(der_p.get(i, 0.0)) for i in der_ids])
    if base is None:
        base = solve_feeder(feeder, v_sub, der_p, load_multiplier)
    mask = _monitor_mask(feeder, monitor)
    rows, cols = np.nonzero(mask)
    monitored = [(feeder.nodes[r], PHASES[c]) for r, c in zip(rows, cols)]
    v0 = np.abs(base.v[mask])

    bmask = np.isfinite(feeder.ampacity)
    brows, bcols = np.nonzero(bmask)
    i0 = np.abs(base.i_branch[bmask])

    j = np.zeros((len(v0), len(der_ids)))
    ji = np.zeros((len(i0), len(der_ids)))
    failures = {}
    for col, der_id in enumerate(der_ids):
        pert = dict(der_p)
        pert[der_id] = p_base[col] + delta
        try:
            sol = solve_feeder(feeder, v_sub, pert, load_multiplier, enforce_rating=False)
        except FeederConvergenceError as exc:
            failures[der_id] = str(exc)
            continue
        j[:, col] = (np.abs(sol.v[mask]) - v0) / delta
        ji[:, col] = (np.abs(sol.i_branch[bmask]) - i0) / delta
    if failures:
        raise VsmBuildError(failures)
    return VsmMatrix(
        j, v0, p_base, der_ids, monitored, delta, built_at,
        ji, i0, feeder.ampacity[bmask],
        [(feeder.branches[r].name, PHASES[c]) for r, c in zip(brows, bcols)],
    )


def solve_headroom_lp(
    vsm: VsmMatrix,
    v_lo: float = 0.95,
    v_hi: float = 1.05,
    p_cap: np.ndarray | None = None,
    current_limits: bool = True,
) -> HeadroomResult:
    """Maximize total DER output under the linearized voltage/current model."""
    m = len(vsm.der_ids)
    if m == 0:
        return HeadroomResult(np.zeros(0), 0.0, [], "no-ders")
    p_cap = np.full(m, np.inf) if p_cap is None else np.asarray(p_cap, float)
    zero = np.zeros(m)

    low = vsm.v_base < v_lo - FEAS_TOL
    high = vsm.v_base > v_hi + FEAS_TOL
    use_i = current_limits and len(vsm.i_base) > 0
    over = use_i & (vsm.i_base > vsm.ampacity + FEAS_TOL) if use_i else np.zeros(0, bool)
    if low.any() or high.any() or np.any(over) or np.any(vsm.p_base > p_cap + FEAS_TOL):
        where = [f"{n}.{p}" for (n, p), bad in zip(vsm.monitored, low | high) if bad][:5]
        return HeadroomResult(zero, 0.0, [], "infeasible-base", f"base point violates limits at {where}")

    a_ub = [vsm.j, -vsm.j]
    b_ub = [v_hi - vsm.v_base, vsm.v_base - v_lo]
    labels = [f"V<={v_hi}:{n}.{p}" for n, p in vsm.monitored] + [f"V>={v_lo}:{n}.{p}" for n, p in vsm.monitored]
    if use_i:
        a_ub.append(vsm.j_current)
        b_ub.append(vsm.ampacity - vsm.i_base)
        labels += [f"I<=amp:{b}.{p}" for b, p in vsm.current_labels]
    a_ub = np.vstack(a_ub)
    b_ub = np.concatenate(b_ub)
    bounds = [(-pb, None if np.isinf(c) else c - pb) for pb, c in zip(vsm.p_base, p_cap)]

    res = linprog(
        -np.ones(m), A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": LP_TOL, "dual_feasibility_tolerance": LP_TOL},
    )
    if res.status != 0:
        return HeadroomResult(zero, 0.0, [], "solver-failed", res.message)
    dp = np.asarray(res.x)
    slack = b_ub - a_ub @ dp
    binding = [lab for lab, s in zip(labels, slack) if s <= 1e-7]
    for der_id, x, pb, c in zip(vsm.der_ids, dp, vsm.p_base, p_cap):
        if np.isfinite(c) and c - pb - x <= 1e-7:
            binding.append(f"P<=cap:{der_id}")
    headroom = max(0.0, float(dp.sum()))
    return HeadroomResult(dp, headroom, binding, "optimal")


def refresh_policy(t: float, last_built: float | None, period: float = 10.0) -> bool:
    """Whether the sensitivity matrix is due for a rebuild at time ``t``."""
    if last_built is None or period <= 0:
        return True
    return t - last_built >= period - 1e-9
