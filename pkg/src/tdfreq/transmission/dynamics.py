"""Transmission frequency dynamics as a semi-explicit DAE.

States per generator: rotor angle, speed and mechanical power.

    d(delta)/dt  = wb (w - 1)
    2H dw/dt     = Pm - Pe - D (w - 1)
    Tg dPm/dt    = clip(Pref + Pagc - (w - 1)/R, Pmin, Pmax) - Pm

Algebraic unknowns are the rectangular bus voltages; the algebraic equations
are nodal current balance with generators behind x'd, constant-impedance or
constant-power native loads, constant-power boundary loads and DER injections.
The full system is advanced with the implicit trapezoidal rule and Newton.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..der import DerBank
from .network import Grid, GridError, PowerFlowResult, solve_power_flow

log = logging.getLogger(__name__)

F0 = 60.0
WB = 2 * np.pi * F0
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 15
MAX_HALVINGS = 4


class LastSourceTrip(GridError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, time: float, message: str, state: dict):
        self.time = time
        self.state = state
        super().__init__(f"t={time:.6f}s: {message}")


@dataclass(frozen=True)
class Event:
    kind: str  # generator_trip | setpoint_change | load_scale
    target: str
    time: float
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("generator_trip", "setpoint_change", "load_scale"):
            raise ValueError(f"unknown event kind {self.kind!r}")


def coi_frequency(h: np.ndarray, omega: np.ndarray) -> float:
    """Inertia-weighted mean speed in Hz."""
    h = np.asarray(h, float)
    return float(F0 * np.dot(h, omega) / h.sum())


@dataclass
class _Params:
    gbus: np.ndarray
    h: np.ndarray
    d: np.ndarray
    xd: np.ndarray
    r_inv: np.ndarray
    tg: np.ndarray
    has_gov: np.ndarray
    pmax: np.ndarray
    pmin: np.ndarray
    e: np.ndarray = field(default=None)


class TransmissionDae:
    """Generators, network and DER injections of one transmission grid."""

    def __init__(
        self,
        grid: Grid,
        boundary_load: dict[str, complex] | None = None,
        ders: DerBank | None = None,
        der_bus: list[str] | None = None,
        dt: float = 1 / 30,
        t0: float = 0.0,
    ):
        self.grid = grid
        self.dt = float(dt)
        self.t0 = float(t0)
        self.k = 0
        self.n = grid.n
        self.ders = ders
        base = grid.base_mva
        boundary_load = {str(b): complex(s) for b, s in (boundary_load or {}).items()}
        self.boundary = grid.boundary_buses()
        for b in boundary_load:
            if b not in self.boundary:
                raise GridError(f"bus {b} is not a boundary bus")

        # DER aggregation onto transmission buses
        self.der_map = np.zeros((self.n, 0 if ders is None else len(ders)))
        if ders is not None:
            if der_bus is None or len(der_bus) != len(ders):
                raise ValueError("der_bus must name a boundary bus for every DER")
            for j, b in enumerate(der_bus):
                if str(b) not in self.boundary:
                    raise GridError(f"DER {ders.ids[j]} mapped to non-boundary bus {b}")
                self.der_map[grid.index[str(b)], j] = 1.0
        der0 = self._der_bus_mw()

        pf = solve_power_flow(grid, boundary_load)
        self.power_flow: PowerFlowResult = pf
        v0 = pf.v
        self.v = v0.copy()

        # loads: boundary loads are gross of the DER output used at the operating point
        self.bnd_gross = np.zeros(self.n, dtype=complex)
        for b, s in boundary_load.items():
            k = grid.index[b]
            self.bnd_gross[k] = (s + der0[k]) / base
        native = grid.native_load()
        self.native_mult = np.ones(self.n)
        if grid.load_model == "Z":
            self.y_load = np.conj(native) / np.abs(v0) ** 2
            self.s_native = np.zeros(self.n, dtype=complex)
        else:
            self.y_load = np.zeros(self.n, dtype=complex)
            self.s_native = native
        self.y_net = grid.ybus()

        gens = grid.generators
        self.gen_ids = [g.id for g in gens]
        self._gidx = {g: i for i, g in enumerate(self.gen_ids)}
        ng = len(gens)
        scale = np.array([g.mva / base for g in gens])
        has_gov = np.array([g.governor is not None for g in gens])
        self.p = _Params(
            gbus=np.array([grid.index[g.bus] for g in gens]),
            h=np.array([g.h for g in gens]) * scale,
            d=np.array([g.d for g in gens]) * scale,
            xd=np.array([g.xd_prime for g in gens]) / scale,
            r_inv=np.array([scale[i] / g.governor.r if g.governor else 0.0 for i, g in enumerate(gens)]),
            tg=np.array([g.governor.tg if g.governor else 1.0 for g in gens]),
            has_gov=has_gov.astype(float),
            pmax=np.array([g.governor.p_max / base if g.governor else np.inf for g in gens]),
            pmin=np.array([g.governor.p_min / base if g.governor else -np.inf for g in gens]),
        )
        # back-initialize internal EMFs and mechanical power
        s_gen = np.array([pf.s_gen[g] for g in self.gen_ids])
        vg = v0[self.p.gbus]
        ig = np.conj(s_gen / vg)
        emf = vg + 1j * self.p.xd * ig
        self.p.e = np.abs(emf)
        self.delta = np.angle(emf)
        self.omega = np.ones(ng)
        self.pm = s_gen.real.copy()
        self.pref = self.pm.copy()
        self.p_agc = np.zeros(ng)
        self.online = np.ones(ng, dtype=bool)
        bad = [self.gen_ids[i] for i in range(ng) if has_gov[i]
               and not (self.p.pmin[i] - 1e-9 <= self.pm[i] <= self.p.pmax[i] + 1e-9)]
        if bad:
            raise GridError(f"initial dispatch outside governor limits for {bad}")

        self.events: list[Event] = []
        self.applied_events: list[tuple[float, Event]] = []
        self.resolve_algebraic()
        # exact equilibrium at the tightened algebraic solution
        self.pm = self.electrical_power()
        self.pref = self.pm.copy()

    # -- inputs ---------------------------------------------------------------

    @property
    def time(self) -> float:
        return self.t0 + self.k * self.dt

    def _der_bus_mw(self) -> np.ndarray:
        if self.ders is None or len(self.ders) == 0:
            return np.zeros(self.n)
        return self.der_map @ self.ders.p_out

    def _s_inject(self, der_mw: np.ndarray | None = None) -> np.ndarray:
        der_mw = self._der_bus_mw() if der_mw is None else der_mw
        return der_mw / self.grid.base_mva - self.bnd_gross - self.s_native * self.native_mult

    def set_boundary_load(self, bus: str, s_mva: complex, der_mw: float = 0.0) -> None:
        """Hold a boundary load; ``der_mw`` is the DER output embedded in ``s_mva``."""
        bus = str(bus)
        if bus not in self.boundary:
            raise GridError(f"bus {bus} is not a boundary bus")
        self.bnd_gross[self.grid.index[bus]] = (complex(s_mva) + der_mw) / self.grid.base_mva

    def get_boundary_voltage(self, bus: str) -> complex:
        bus = str(bus)
        if bus not in self.boundary:
            raise GridError(f"bus {bus} is not a boundary bus")
        return complex(self.v[self.grid.index[bus]])

    def set_agc(self, gen_id: str, mw: float) -> None:
        i = self._gidx[gen_id]
        if not self.p.has_gov[i]:
            raise GridError(f"generator {gen_id} has no governor to receive AGC")
        self.p_agc[i] = mw / self.grid.base_mva

    def set_native_multiplier(self, mult: np.ndarray) -> None:
        self.native_mult = np.asarray(mult, float)

    def schedule(self, events: list[Event]) -> None:
        for ev in events:
            if ev.kind in ("generator_trip", "setpoint_change") and ev.target not in self._gidx:
                raise GridError(f"event references unknown generator {ev.target}")
            if ev.kind == "load_scale" and ev.target not in self.grid.index:
                raise GridError(f"event references unknown bus {ev.target}")
        self.events = sorted(self.events + list(events), key=lambda e: e.time)

    def apply_event(self, ev: Event) -> None:
        base = self.grid.base_mva
        if ev.kind == "generator_trip":
            i = self._gidx[ev.target]
            if self.online.sum() == 1 and self.online[i]:
                raise LastSourceTrip(f"tripping {ev.target} would remove the last source")
            self.online[i] = False
        elif ev.kind == "setpoint_change":
            i = self._gidx[ev.target]
            self.pref[i] += ev.value / base
            if not self.p.has_gov[i]:
                self.pm[i] += ev.value / base
        else:
            k = self.grid.index[ev.target]
            native = self.grid.native_load()[k]
            if self.grid.load_model == "Z":
                self.y_load[k] = np.conj(native) / abs(self.power_flow.v[k]) ** 2 * ev.value
            else:
                self.s_native[k] = native * ev.value
        self.applied_events.append((self.time, ev))
        log.info("t=%.4f applied %s %s %g", self.time, ev.kind, ev.target, ev.value)
        self.resolve_algebraic()

    # -- measurements -----------------------------------------------------------

    def frequency(self) -> float:
        on = self.online
        return coi_frequency(self.p.h[on], self.omega[on])

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.delta, self.omega, self.pm])

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.v.real, self.v.imag])

    @property
    def mass(self) -> np.ndarray:
        ng = len(self.gen_ids)
        return np.concatenate([np.ones(ng), 2 * self.p.h, self.p.tg])

    def electrical_power(self) -> np.ndarray:
        vg = self.v[self.p.gbus]
        e = self.p.e
        pe = e * (np.sin(self.delta) * vg.real - np.cos(self.delta) * vg.imag) / self.p.xd
        return pe * self.online

    def algebraic_residual(self) -> float:
        g, _ = self._algebraic(self.delta, self.v, self._s_inject(), jac=False)
        return float(np.max(np.abs(g)))

    # -- residuals ----------------------------------------------------------------

    def _f(self, delta, omega, pm, v):
        p, on = self.p, self.online.astype(float)
        vg = v[p.gbus]
        sd, cd = np.sin(delta), np.cos(delta)
        pe = p.e * (sd * vg.real - cd * vg.imag) / p.xd
        fd = WB * (omega - 1) * on
        fw = (pm - pe - p.d * (omega - 1)) * on
        target = self.pref + self.p_agc - p.r_inv * (omega - 1)
        free = (target > p.pmin) & (target < p.pmax)
        fp = (np.clip(target, p.pmin, p.pmax) - pm) * p.has_gov * on
        return fd, fw, fp, free

    def _algebraic(self, delta, v, s_inj, jac=True):
        """Current mismatch (real, imag stacked) and its derivatives in delta and (Vr, Vi)."""
        p, on = self.p, self.online.astype(float)
        n, ng = self.n, len(delta)
        vr, vi = v.real, v.imag
        er, ei = p.e * np.cos(delta), p.e * np.sin(delta)
        igr = (ei - vi[p.gbus]) / p.xd * on
        igi = -(er - vr[p.gbus]) / p.xd * on
        m = vr**2 + vi**2
        P, Q = s_inj.real, s_inj.imag
        icr = (P * vr + Q * vi) / m
        ici = (P * vi - Q * vr) / m
        y = self.y_net + np.diag(self.y_load * self.native_mult)
        iy = y @ v
        gr = -iy.real + icr
        gi = -iy.imag + ici
        np.add.at(gr, p.gbus, igr)
        np.add.at(gi, p.gbus, igi)
        g = np.concatenate([gr, gi])
        if not jac:
            return g, None
        G, B = y.real, y.imag
        dgy = -np.block([[G, -B], [B, G]])
        idx = np.arange(n)
        dgy[idx, idx] += P / m - (P * vr + Q * vi) * 2 * vr / m**2
        dgy[idx, n + idx] += Q / m - (P * vr + Q * vi) * 2 * vi / m**2
        dgy[n + idx, idx] += -Q / m - (P * vi - Q * vr) * 2 * vr / m**2
        dgy[n + idx, n + idx] += P / m - (P * vi - Q * vr) * 2 * vi / m**2
        np.add.at(dgy, (p.gbus, n + p.gbus), -on / p.xd)
        np.add.at(dgy, (n + p.gbus, p.gbus), on / p.xd)
        dgd = np.zeros((2 * n, ng))
        gi_idx = np.arange(ng)
        dgd[p.gbus, gi_idx] = er / p.xd * on
        dgd[n + p.gbus, gi_idx] = ei / p.xd * on
        return g, (dgd, dgy)

    def resolve_algebraic(self, tol: float = 1e-10, max_iter: int = 30) -> None:
        """Re-solve bus voltages at the present states and inputs."""
        s_inj = self._s_inject()
        n = self.n
        for _ in range(max_iter):
            g, (_, dgy) = self._algebraic(self.delta, self.v, s_inj)
            if np.max(np.abs(g)) <= tol:
                return
            dy = np.linalg.solve(dgy, -g)
            self.v = self.v + dy[:n] + 1j * dy[n:]
        g, _ = self._algebraic(self.delta, self.v, s_inj, jac=False)
        if np.max(np.abs(g)) > NEWTON_TOL:
            raise IntegrationError(self.time, "algebraic re-solve failed", self.dump())

    # -- integration ------------------------------------------------------------

    def _trap(self, dt, s_end):
        """One trapezoidal step from the current point; returns the new point or None."""
        p, on = self.p, self.online.astype(float)
        ng, n = len(self.gen_ids), self.n
        fd0, fw0, fp0, _ = self._f(self.delta, self.omega, self.pm, self.v)
        d, w, pm, v = self.delta.copy(), self.omega.copy(), self.pm.copy(), self.v.copy()
        h2 = dt / 2
        for _ in range(NEWTON_MAX_ITER):
            fd, fw, fp, free = self._f(d, w, pm, v)
            g, (dgd, dgy) = self._algebraic(d, v, s_end)
            r = np.concatenate([
                d - self.delta - h2 * (fd + fd0),
                2 * p.h * (w - self.omega) - h2 * (fw + fw0),
                p.tg * (pm - self.pm) - h2 * (fp + fp0),
                g,
            ])
            if not np.all(np.isfinite(r)):
                return None
            if np.max(np.abs(r)) <= NEWTON_TOL:
                return d, w, pm, v
            vg = v[p.gbus]
            sd, cd = np.sin(d), np.cos(d)
            dpe_dd = p.e * (cd * vg.real + sd * vg.imag) / p.xd
            dpe_dvr = p.e * sd / p.xd
            dpe_dvi = -p.e * cd / p.xd
            N = 3 * ng + 2 * n
            J = np.zeros((N, N))
            i = np.arange(ng)
            J[i, i] = 1.0
            J[i, ng + i] = -h2 * WB * on
            J[ng + i, ng + i] = 2 * p.h + h2 * p.d * on
            J[ng + i, 2 * ng + i] = -h2 * on
            J[ng + i, i] = h2 * dpe_dd * on
            J[ng + i, 3 * ng + p.gbus] = h2 * dpe_dvr * on
            J[ng + i, 3 * ng + n + p.gbus] = h2 * dpe_dvi * on
            J[2 * ng + i, 2 * ng + i] = p.tg + h2 * p.has_gov * on
            J[2 * ng + i, ng + i] = h2 * p.r_inv * free * p.has_gov * on
            J[3 * ng:, :ng] = dgd
            J[3 * ng:, 3 * ng:] = dgy
            try:
                dz = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                return None
            d = d + dz[:ng]
            w = w + dz[ng:2 * ng]
            pm = pm + dz[2 * ng:3 * ng]
            v = v + dz[3 * ng:3 * ng + n] + 1j * dz[3 * ng + n:]
        return None

    def _advance(self, dt, der0, der1, depth=0):
        t = self.time
        result = self._trap(dt, self._s_inject(der1))
        if result is not None:
            self.delta, self.omega, self.pm, self.v = result
            return
        if depth >= MAX_HALVINGS:
            raise IntegrationError(t, f"Newton failed after {MAX_HALVINGS} step halvings", self.dump())
        log.warning("t=%.4f Newton failed, halving step to %.5g", t, dt / 2)
        mid = 0.5 * (der0 + der1)
        self._advance(dt / 2, der0, mid, depth + 1)
        self._advance(dt / 2, mid, der1, depth + 1)

    def step(self) -> None:
        """Advance one internal step, applying any events due at the current time."""
        while self.events and self.events[0].time <= self.time + 1e-9:
            self.apply_event(self.events.pop(0))
        der0 = self._der_bus_mw()
        if self.ders is not None and len(self.ders):
            self.ders.step(self.frequency(), self.time, self.dt)
        der1 = self._der_bus_mw()
        self._advance(self.dt, der0, der1)
        self.k += 1

    def steps_until(self, t: float) -> int:
        return max(0, int(round((t - self.t0) / self.dt)) - self.k)

    def dump(self) -> dict:
        return {
            "t": self.time, "delta": self.delta.tolist(), "omega": self.omega.tolist(),
            "pm": self.pm.tolist(), "v": [complex(x) for x in self.v], "online": self.online.tolist(),
        }


def measure_frequency(dae: TransmissionDae) -> float:
    return dae.frequency()
