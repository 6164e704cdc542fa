"""Three-phase unbalanced feeder model and quasi-static power flow.

Radial feeders are solved by a backward-forward sweep expressed with a sparse
branch-to-node path matrix; meshed inputs fall back to a fixed-point iteration
on the three-phase admittance matrix. Voltages are line-to-neutral.
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import yaml

PHASES = "abc"
A_OP = np.exp(2j * np.pi / 3)
# a, b, c rotation of a balanced positive-sequence source
BALANCED = np.array([1.0, A_OP**-1, A_OP])


class FeederError(Exception):
    pass


class FeederConvergenceError(FeederError):
    pass


@dataclass
class Branch:
    name: str
    from_node: str
    to_node: str
    z: np.ndarray  # (3, 3) complex ohm, zero rows/cols for absent phases
    phases: str = "abc"
    ampacity: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))


@dataclass
class Load:
    node: str
    s_kva: np.ndarray  # (3,) complex kW + j kVAr per phase
    model: str = "P"


@dataclass
class DerSite:
    id: str
    node: str
    phases: str = "abc"
    rating_mw: float = np.inf


@dataclass
class FeederNetwork:
    name: str
    v_base_kv: float  # line-to-line
    source: str
    branches: list[Branch]
    loads: list[Load] = field(default_factory=list)
    ders: list[DerSite] = field(default_factory=list)

    def __post_init__(self):
        self._build()

    # -- topology -----------------------------------------------------------
    def _build(self):
        names = [self.source]
        for br in self.branches:
            for n in (br.from_node, br.to_node):
                if n not in names:
                    names.append(n)
        adj: dict[str, list[tuple[int, str]]] = {n: [] for n in names}
        for i, br in enumerate(self.branches):
            adj[br.from_node].append((i, br.to_node))
            adj[br.to_node].append((i, br.from_node))
        order = [self.source]
        parent_branch = {self.source: None}
        queue = deque([self.source])
        while queue:
            n = queue.popleft()
            for i, m in adj[n]:
                if m not in parent_branch:
                    parent_branch[m] = i
                    order.append(m)
                    queue.append(m)
        if len(order) != len(names):
            missing = sorted(set(names) - set(order))
            raise FeederError(f"{self.name}: disconnected nodes {missing[:5]}")
        self.nodes = order
        self.index = {n: k for k, n in enumerate(order)}
        self.radial = len(self.branches) == len(order) - 1

        n = len(order)
        present = np.zeros((n, 3), dtype=bool)
        present[0] = True
        for br in self.branches:
            mask = np.array([p in br.phases for p in PHASES])
            present[self.index[br.to_node]] |= mask
            present[self.index[br.from_node]] |= mask
        self.present = present

        for ld in self.loads:
            k = self._node_index(ld.node)
            bad = (np.abs(ld.s_kva) > 0) & ~present[k]
            if bad.any():
                raise FeederError(f"{self.name}: load at {ld.node} on absent phase")
        for d in self.ders:
            k = self._node_index(d.node)
            if not all(present[k, PHASES.index(p)] for p in d.phases):
                raise FeederError(f"{self.name}: DER {d.id} on absent phase at {d.node}")
        ids = [d.id for d in self.ders]
        if len(set(ids)) != len(ids):
            raise FeederError(f"{self.name}: duplicate DER ids")

        if self.radial:
            rows, cols = [], []
            for k in range(1, n):
                node = order[k]
                while node != self.source:
                    b = parent_branch[node]
                    rows.append(b)
                    cols.append(k)
                    br = self.branches[b]
                    node = br.from_node if br.to_node == node else br.to_node
            self.path = sp.csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(len(self.branches), n)
            )
            # orientation of each branch relative to the source (+1: from -> to points away)
            self.orient = np.array(
                [
                    1.0 if parent_branch.get(br.to_node) == i else -1.0
                    for i, br in enumerate(self.branches)
                ]
            )
        self.z_stack = np.array([br.z for br in self.branches]) if self.branches else np.zeros((0, 3, 3))
        self.ampacity = np.array([br.ampacity for br in self.branches]) if self.branches else np.zeros((0, 3))

    def _node_index(self, node: str) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise FeederError(f"{self.name}: unknown node {node!r}") from None

    @property
    def v_base_ln(self) -> float:
        return self.v_base_kv * 1e3 / np.sqrt(3.0)

    @property
    def total_load_kva(self) -> np.ndarray:
        return sum((ld.s_kva for ld in self.loads), np.zeros(3, dtype=complex))

    def der(self, der_id: str) -> DerSite:
        for d in self.ders:
            if d.id == der_id:
                return d
        raise FeederError(f"{self.name}: unknown DER {der_id!r}")

    def scaled(self, factor: float) -> "FeederNetwork":
        out = copy.deepcopy(self)
        for ld in out.loads:
            ld.s_kva = ld.s_kva * factor
        return out

    # -- io -------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "FeederNetwork":
        codes = {}
        for name, lc in (data.get("linecodes") or {}).items():
            z = np.asarray(lc["r"], float) + 1j * np.asarray(lc["x"], float)
            codes[name] = (z.reshape(3, 3), lc.get("ampacity", np.inf))
        branches = []
        for i, b in enumerate(data["branches"]):
            phases = b.get("phases", "abc")
            if "linecode" in b:
                zpk, amp = codes[b["linecode"]]
                z = zpk * float(b["length_km"])
            else:
                z = (np.asarray(b["r"], float) + 1j * np.asarray(b["x"], float)).reshape(3, 3)
                amp = b.get("ampacity", np.inf)
            mask = np.array([p in phases for p in PHASES])
            z = np.where(np.outer(mask, mask), z, 0.0)
            amp = np.where(mask, np.broadcast_to(np.asarray(b.get("ampacity", amp), float), 3), np.inf)
            branches.append(
                Branch(b.get("name", f"br{i}"), str(b["from"]), str(b["to"]), z, phases, amp)
            )
        loads = []
        for ld in data.get("loads") or []:
            kw = np.broadcast_to(np.asarray(ld.get("kw", 0.0), float), 3)
            kvar = np.broadcast_to(np.asarray(ld.get("kvar", 0.0), float), 3)
            loads.append(Load(str(ld["node"]), kw + 1j * kvar, ld.get("model", "P")))
        ders = [
            DerSite(str(d["id"]), str(d["node"]), d.get("phases", "abc"), float(d.get("rating_mw", np.inf)))
            for d in data.get("ders") or []
        ]
        return cls(data["name"], float(data["v_base_kv"]), str(data["source"]), branches, loads, ders)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "FeederNetwork":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise FeederError(f"{path}: malformed file ({type(exc).__name__}: {exc})") from exc


@dataclass
class FeederSolution:
    v: np.ndarray  # (n, 3) complex pu, nan on absent phases
    i_branch: np.ndarray  # (nb, 3) complex A, from -> to direction
    s_sub: np.ndarray  # (3,) complex MVA drawn from the source, load-positive
    iterations: int
    residual: float
    s_node: np.ndarray  # (n, 3) complex MVA net demand used at the solution
    v_source: np.ndarray  # (3,) complex pu

    def vmag(self) -> np.ndarray:
        """Magnitudes of all present node-phases, flattened in node order."""
        m = np.abs(self.v)
        return m[~np.isnan(m)]

    def voltage_stats(self) -> tuple[float, float, float, float]:
        m = self.vmag()
        return float(m.mean()), float(m.std()), float(m.min()), float(m.max())


def _net_demand(
    feeder: FeederNetwork, der_p: dict[str, float] | None, load_multiplier: float, enforce_rating: bool = True
) -> np.ndarray:
    s = np.zeros((len(feeder.nodes), 3), dtype=complex)
    for ld in feeder.loads:
        s[feeder.index[ld.node]] += ld.s_kva * 1e-3 * load_multiplier
    for der_id, p in (der_p or {}).items():
        site = feeder.der(der_id)
        if enforce_rating and (p < -1e-12 or p > site.rating_mw + 1e-9):
            raise FeederError(f"{feeder.name}: DER {der_id} output {p} MW outside [0, {site.rating_mw}]")
        share = p / len(site.phases)
        for ph in site.phases:
            s[feeder.index[site.node], PHASES.index(ph)] -= share
    return s


def solve_feeder(
    feeder: FeederNetwork,
    v_sub: complex = 1.0,
    der_p: dict[str, float] | None = None,
    load_multiplier: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    method: str = "auto",
    enforce_rating: bool = True,
) -> FeederSolution:
    """Solve the feeder fed by a balanced source of positive-sequence phasor ``v_sub`` (pu).

    DERs inject at unity power factor, split equally across their phases. The
    reported substation power is the net draw, i.e. loads minus DER output plus
    losses, per phase.
    """
    s_node = _net_demand(feeder, der_p, load_multiplier, enforce_rating)
    if method == "auto":
        method = "sweep" if feeder.radial else "ybus"
    if method == "sweep":
        if not feeder.radial:
            raise FeederError("backward-forward sweep needs a radial feeder")
        return _sweep(feeder, v_sub, s_node, tol, max_iter)
    if method == "ybus":
        return _ybus_fixed_point(feeder, v_sub, s_node, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def _sweep(feeder, v_sub, s_node, tol, max_iter) -> FeederSolution:
    vb = feeder.v_base_ln
    present = feeder.present
    v_src = complex(v_sub) * BALANCED * vb
    s_va = s_node * 1e6
    v = np.broadcast_to(v_src, s_node.shape).astype(complex)
    path = feeder.path
    z = feeder.z_stack
    residual = np.inf
    for it in range(1, max_iter + 1):
        i_node = np.where(present, np.conj(s_va / v), 0.0)
        i_br = path @ i_node
        drop = np.einsum("bij,bj->bi", z, i_br)
        v_new = v_src - path.T @ drop
        residual = float(np.max(np.abs(v_new - v)[present])) / vb
        v = v_new
        if residual <= tol:
            break
    else:
        raise FeederConvergenceError(
            f"{feeder.name}: sweep did not converge in {max_iter} iterations (residual {residual:.3e} pu)"
        )
    i_node = np.where(present, np.conj(s_va / v), 0.0)
    i_br = (path @ i_node) * feeder.orient[:, None]
    s_sub = v_src * np.conj(i_node.sum(axis=0)) * 1e-6
    return FeederSolution(
        np.where(present, v / vb, np.nan), i_br, s_sub, it, residual, s_node, v_src / vb
    )


def _ybus(feeder: FeederNetwork) -> np.ndarray:
    n = len(feeder.nodes)
    y = np.zeros((3 * n, 3 * n), dtype=complex)
    for br in feeder.branches:
        idx = [PHASES.index(p) for p in br.phases]
        zsub = br.z[np.ix_(idx, idx)]
        if np.linalg.cond(zsub) > 1e12:
            raise FeederError(f"{br.name}: singular branch impedance, cannot form Ybus")
        ysub = np.linalg.inv(zsub)
        f = [3 * feeder.index[br.from_node] + i for i in idx]
        t = [3 * feeder.index[br.to_node] + i for i in idx]
        y[np.ix_(f, f)] += ysub
        y[np.ix_(t, t)] += ysub
        y[np.ix_(f, t)] -= ysub
        y[np.ix_(t, f)] -= ysub
    return y


def _ybus_fixed_point(feeder, v_sub, s_node, tol, max_iter) -> FeederSolution:
    vb = feeder.v_base_ln
    present = feeder.present
    y = _ybus(feeder)
    flat_present = present.ravel()
    src = np.zeros_like(flat_present)
    src[:3] = True
    unknown = flat_present & ~src
    y_ll = y[np.ix_(unknown, unknown)]
    y_ls = y[np.ix_(unknown, src)]
    v_src = complex(v_sub) * BALANCED * vb
    s_va = (s_node * 1e6).ravel()[unknown]
    lu = np.linalg.inv(y_ll)
    base = -lu @ (y_ls @ v_src)
    v_l = np.tile(v_src, len(feeder.nodes))[unknown]
    residual = np.inf
    for it in range(1, max_iter + 1):
        v_new = base - lu @ np.conj(s_va / v_l)
        residual = float(np.max(np.abs(v_new - v_l))) / vb
        v_l = v_new
        if residual <= tol:
            break
    else:
        raise FeederConvergenceError(
            f"{feeder.name}: Ybus fixed point did not converge in {max_iter} iterations"
        )
    v_full = np.zeros(3 * len(feeder.nodes), dtype=complex)
    v_full[:3] = v_src
    v_full[unknown] = v_l
    v = v_full.reshape(-1, 3)
    i_br = np.zeros((len(feeder.branches), 3), dtype=complex)
    for b, br in enumerate(feeder.branches):
        idx = [PHASES.index(p) for p in br.phases]
        dv = v[feeder.index[br.from_node], idx] - v[feeder.index[br.to_node], idx]
        i_br[b, idx] = np.linalg.solve(br.z[np.ix_(idx, idx)], dv)
    i_src = (y[:3] @ v_full) + np.conj(s_node[0] * 1e6 / v_src)
    s_sub = v_src * np.conj(i_src) * 1e-6
    return FeederSolution(
        np.where(present, v / vb, np.nan), i_br, s_sub, it, residual, s_node, v_src / vb
    )


def aggregate_positive_sequence(s_abc) -> complex:
    """Positive-sequence equivalent of three phase powers: the arithmetic mean."""
    s = np.asarray(s_abc, dtype=complex)
    if s.shape != (3,):
        raise ValueError("expected three phase powers")
    return complex((s[0] + s[1] + s[2]) / 3.0)


def boundary_power_mva(sol: FeederSolution) -> complex:
    """Substation draw as a three-phase-equivalent positive-sequence MVA value.

    Per-phase powers are put on the per-phase base (x3) before averaging, so a
    balanced feeder reports its total three-phase draw.
    """
    return aggregate_positive_sequence(3.0 * sol.s_sub)


@dataclass(frozen=True)
class Violation:
    kind: str  # "undervoltage" | "overvoltage" | "thermal"
    location: str
    phase: str
    value: float
    limit: float


def check_limits(
    sol: FeederSolution,
    feeder: FeederNetwork,
    v_min: float = 0.95,
    v_max: float = 1.05,
    ampacities: np.ndarray | None = None,
) -> list[Violation]:
    out = []
    mag = np.abs(sol.v)
    for k, node in enumerate(feeder.nodes):
        for p in range(3):
            if not feeder.present[k, p]:
                continue
            if mag[k, p] < v_min:
                out.append(Violation("undervoltage", node, PHASES[p], float(mag[k, p]), v_min))
            elif mag[k, p] > v_max:
                out.append(Violation("overvoltage", node, PHASES[p], float(mag[k, p]), v_max))
    amps = feeder.ampacity if ampacities is None else np.asarray(ampacities, float)
    imag = np.abs(sol.i_branch)
    for b, br in enumerate(feeder.branches):
        for p in range(3):
            if imag[b, p] > amps[b, p]:
                out.append(Violation("thermal", br.name, PHASES[p], float(imag[b, p]), float(amps[b, p])))
    return out
