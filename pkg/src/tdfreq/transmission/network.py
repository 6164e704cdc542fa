"""Positive-sequence transmission grid: data model, Ybus and Newton-Raphson power flow."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml


class GridError(Exception):
    pass


class Islanded(GridError):
    def __init__(self, buses: list[str]):
        self.buses = buses
        super().__init__(f"buses not connected to the slack: {buses}")


class PowerFlowError(GridError):
    def __init__(self, iterations: int, mismatch: float, worst_bus: str):
        self.iterations = iterations
        self.mismatch = mismatch
        self.worst_bus = worst_bus
        super().__init__(
            f"power flow did not converge in {iterations} iterations; "
            f"max mismatch {mismatch:.3e} pu at bus {worst_bus}"
        )


@dataclass
class Bus:
    id: str
    kind: str = "pq"  # slack | pv | pq
    v_set: float = 1.0
    p_load: float = 0.0  # MW
    q_load: float = 0.0  # MVAr
    gs: float = 0.0  # MW at 1 pu
    bs: float = 0.0  # MVAr at 1 pu


@dataclass
class Line:
    from_bus: str
    to_bus: str
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0


@dataclass
class Governor:
    r: float = 0.05  # droop on machine base
    tg: float = 0.5
    p_max: float = np.inf  # MW
    p_min: float = 0.0


@dataclass
class Generator:
    id: str
    bus: str
    p_mw: float
    mva: float = 100.0
    h: float = 5.0  # s, machine base
    d: float = 0.0  # pu on machine base
    xd_prime: float = 0.25  # pu on machine base
    governor: Governor | None = None


@dataclass
class Boundary:
    bus: str
    feeder: str


@dataclass
class Grid:
    name: str
    buses: list[Bus]
    lines: list[Line]
    generators: list[Generator]
    boundaries: list[Boundary] = field(default_factory=list)
    base_mva: float = 100.0
    load_model: str = "Z"  # native loads: constant impedance (Z) or constant power (P)

    def __post_init__(self):
        self.index = {b.id: k for k, b in enumerate(self.buses)}
        if len(self.index) != len(self.buses):
            raise GridError("duplicate bus id")
        slack = [b.id for b in self.buses if b.kind == "slack"]
        if len(slack) != 1:
            raise GridError(f"exactly one slack bus required, found {len(slack)}")
        for ln in self.lines:
            for b in (ln.from_bus, ln.to_bus):
                if b not in self.index:
                    raise GridError(f"line references unknown bus {b}")
        gids = [g.id for g in self.generators]
        if len(set(gids)) != len(gids):
            raise GridError("duplicate generator id")
        for g in self.generators:
            if g.bus not in self.index:
                raise GridError(f"generator {g.id} on unknown bus {g.bus}")
            if g.h <= 0 or g.xd_prime <= 0 or g.mva <= 0:
                raise GridError(f"generator {g.id}: H, x'd and MVA must be positive")
            if g.governor is not None and (g.governor.r <= 0 or g.governor.tg <= 0):
                raise GridError(f"generator {g.id}: governor R and Tg must be positive")
        gen_buses = {g.bus for g in self.generators}
        if self.slack not in gen_buses:
            raise GridError("the slack bus must host a generator")
        seen = set()
        for bd in self.boundaries:
            if bd.bus not in self.index:
                raise GridError(f"boundary on unknown bus {bd.bus}")
            if bd.bus in seen:
                raise GridError(f"bus {bd.bus} bound to more than one feeder")
            seen.add(bd.bus)
        if self.load_model not in ("Z", "P"):
            raise GridError("load_model must be 'Z' or 'P'")

    @property
    def slack(self) -> str:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def n(self) -> int:
        return len(self.buses)

    def generator(self, gen_id: str) -> Generator:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(f"unknown generator {gen_id}")

    def boundary_buses(self) -> list[str]:
        return [b.bus for b in self.boundaries]

    def native_load(self) -> np.ndarray:
        """Native bus loads, complex pu on the system base."""
        return np.array([complex(b.p_load, b.q_load) for b in self.buses]) / self.base_mva

    def ybus(self, online: np.ndarray | None = None) -> np.ndarray:
        n = self.n
        y = np.zeros((n, n), dtype=complex)
        for ln in self.lines:
            i, j = self.index[ln.from_bus], self.index[ln.to_bus]
            ys = 1.0 / complex(ln.r, ln.x)
            t = ln.tap
            y[i, i] += ys / t**2 + 0.5j * ln.b
            y[j, j] += ys + 0.5j * ln.b
            y[i, j] -= ys / t
            y[j, i] -= ys / t
        for k, b in enumerate(self.buses):
            y[k, k] += complex(b.gs, b.bs) / self.base_mva
        return y

    def check_connected(self) -> None:
        adj = {b.id: [] for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        seen = {self.slack}
        queue = deque([self.slack])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        missing = [b.id for b in self.buses if b.id not in seen]
        if missing:
            raise Islanded(missing)

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        buses = [
            Bus(str(b["id"]), b.get("type", "pq"), float(b.get("v", 1.0)), float(b.get("p_load", 0.0)),
                float(b.get("q_load", 0.0)), float(b.get("gs", 0.0)), float(b.get("bs", 0.0)))
            for b in data["buses"]
        ]
        lines = [
            Line(str(ln["from"]), str(ln["to"]), float(ln["r"]), float(ln["x"]), float(ln.get("b", 0.0)),
                 float(ln.get("tap", 1.0)))
            for ln in data.get("lines", [])
        ]
        gens = []
        for g in data["generators"]:
            gov = g.get("governor")
            governor = None if gov is None else Governor(
                float(gov.get("r", 0.05)), float(gov.get("tg", 0.5)),
                float(gov.get("p_max", np.inf)), float(gov.get("p_min", 0.0)),
            )
            gens.append(Generator(
                str(g["id"]), str(g["bus"]), float(g["p_mw"]), float(g.get("mva", 100.0)), float(g.get("h", 5.0)),
                float(g.get("d", 0.0)), float(g.get("xd_prime", 0.25)), governor,
            ))
        boundaries = [Boundary(str(b["bus"]), str(b["feeder"])) for b in data.get("boundaries", [])]
        return cls(data.get("name", "grid"), buses, lines, gens, boundaries,
                   float(data.get("base_mva", 100.0)), data.get("load_model", "Z"))

    @classmethod
    def from_yaml(cls, path: str | Path) -> "Grid":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise GridError(f"{path}: malformed file ({type(exc).__name__}: {exc})") from exc


@dataclass
class PowerFlowResult:
    v: np.ndarray  # complex pu per bus
    s_bus: np.ndarray  # complex pu net injection per bus
    s_gen: dict[str, complex]  # pu per generator
    iterations: int
    mismatch: float


def solve_power_flow(
    grid: Grid,
    extra_load: dict[str, complex] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> PowerFlowResult:
    """Polar Newton-Raphson from a flat start.

    ``extra_load`` adds constant-power load in MVA at named buses (the boundary
    loads). Native loads enter as constant power at the operating point.
    """
    grid.check_connected()
    n = grid.n
    y = grid.ybus()
    s_spec = -grid.native_load()
    for bus, s in (extra_load or {}).items():
        s_spec[grid.index[str(bus)]] -= complex(s) / grid.base_mva
    gen_p = {}
    for g in grid.generators:
        k = grid.index[g.bus]
        gen_p[k] = gen_p.get(k, 0.0) + g.p_mw / grid.base_mva
    p_spec = s_spec.real.copy()
    for k, p in gen_p.items():
        p_spec[k] += p
    q_spec = s_spec.imag

    kinds = [b.kind for b in grid.buses]
    slack = grid.index[grid.slack]
    vm = np.ones(n)
    va = np.zeros(n)
    for k, b in enumerate(grid.buses):
        if b.kind in ("slack", "pv") or k in gen_p:
            vm[k] = b.v_set
    pv = [k for k in range(n) if k != slack and (kinds[k] == "pv" or k in gen_p)]
    pq = [k for k in range(n) if k != slack and k not in pv]
    ang = [k for k in range(n) if k != slack]

    def mismatch(vm, va):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        return v, s, np.concatenate([p_spec[ang] - s.real[ang], q_spec[pq] - s.imag[pq]])

    v, s, f = mismatch(vm, va)
    it = 0
    while np.max(np.abs(f), initial=0.0) > tol:
        if it >= max_iter:
            full = np.zeros(n)
            full[ang] = np.abs(f[: len(ang)])
            full[pq] = np.maximum(full[pq], np.abs(f[len(ang):]))
            worst = int(np.argmax(full))
            raise PowerFlowError(it, float(full[worst]), grid.buses[worst].id)
        i_bus = y @ v
        ds_dva = 1j * np.diag(v) @ np.conj(np.diag(i_bus) - y @ np.diag(v))
        ds_dvm = np.diag(v) @ np.conj(y @ np.diag(v / vm)) + np.diag(v / vm) @ np.conj(np.diag(i_bus))
        jac = np.block([
            [ds_dva.real[np.ix_(ang, ang)], ds_dvm.real[np.ix_(ang, pq)]],
            [ds_dva.imag[np.ix_(pq, ang)], ds_dvm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            dx = np.full(len(f), np.nan)
        if not np.all(np.isfinite(dx)):
            it = max_iter  # singular or diverged Jacobian: report the current mismatch
            continue
        if np.any(vm[pq] + dx[len(ang):] <= 0):
            it = max_iter  # voltage collapse: no operating point near this iterate
            continue
        va[ang] += dx[: len(ang)]
        vm[pq] += dx[len(ang):]
        v, s, f = mismatch(vm, va)
        it += 1

    # split bus generation across its units: P by schedule (slack takes the balance), Q by rating
    s_load = -s_spec
    s_genbus = s + s_load
    s_gen = {}
    for k in gen_p:
        units = [g for g in grid.generators if grid.index[g.bus] == k]
        mva = sum(g.mva for g in units)
        p_sched = sum(g.p_mw for g in units) / grid.base_mva
        for g in units:
            share = g.mva / mva
            p = g.p_mw / grid.base_mva + (s_genbus[k].real - p_sched) * share
            s_gen[g.id] = complex(p, s_genbus[k].imag * share)
    return PowerFlowResult(v, s, s_gen, it, float(np.max(np.abs(f), initial=0.0)))
