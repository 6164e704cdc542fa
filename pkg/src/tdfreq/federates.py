"""Federate wrappers around the transmission, feeder, AGC and DER-aggregator models.

Topics (all values MW/MVA or pu as noted):

    freq_hz                      transmission -> agc             every meas_out
    boundary_voltage.<bus>       transmission -> feeder          complex pu, every td_exchange
    der_output.<der>             transmission -> feeder          DER P_out, every td_exchange
    boundary_power.<bus>         feeder -> transmission          complex MVA net load, every td_exchange
    boundary_der.<bus>           feeder -> transmission          DER MW embedded in boundary_power
    headroom.<feeder>            feeder -> aggregator            MW, every vsm_refresh
    vsm_limit.<der>              feeder -> aggregator            absolute MW limit, every vsm_refresh
    ace_mw                       agc                             every meas_out
    agc_setpoint.<unit>          agc -> transmission/aggregator  every agc_period
    der_setpoint.<der>           aggregator -> transmission      P_ext MW
    der_limit.<der>              aggregator -> transmission      absolute MW limit
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .agc import AgcAreaState, ParticipationTable, compute_ace, dispatch_participation, pi_update
from .distribution import FeederNetwork, boundary_power_mva, solve_feeder
from .headroom import build_vsm, refresh_policy, solve_headroom_lp
from .kernel import FederateContext, FederateDecl
from .transmission import TransmissionDae

log = logging.getLogger(__name__)

EPS = 1e-9


def _on_grid(t: float, period: float) -> bool:
    k = round(t / period)
    return abs(t - k * period) < EPS


@dataclass
class TransmissionRecord:
    """Series captured inside the transmission federate."""

    t: list[float] = field(default_factory=list)
    freq: list[float] = field(default_factory=list)
    der_t: list[float] = field(default_factory=list)
    p_out: list[np.ndarray] = field(default_factory=list)
    p_drp: list[np.ndarray] = field(default_factory=list)
    p_ext: list[np.ndarray] = field(default_factory=list)
    p_mppt: list[np.ndarray] = field(default_factory=list)
    limit: list[np.ndarray] = field(default_factory=list)
    # every internal step, for the output-limit invariant
    full_t: list[float] = field(default_factory=list)
    full_out: list[np.ndarray] = field(default_factory=list)
    full_cap: list[np.ndarray] = field(default_factory=list)
    full_limit: list[np.ndarray] = field(default_factory=list)
    events: list[tuple[float, str, str]] = field(default_factory=list)


class TransmissionFederate:
    def __init__(
        self,
        dae: TransmissionDae,
        decl: FederateDecl,
        der_ids: list[str],
        feeder_buses: dict[str, str],
        agc_units: list[str],
        meas_out: float = 0.5,
        td_exchange: float = 1.0,
        log_every: int = 3,
        native_noise: np.ndarray | None = None,
        noise_dt: float = 1.0,
    ):
        self.decl = decl
        self.dae = dae
        self.der_ids = der_ids
        self.feeder_buses = feeder_buses  # feeder name -> bus
        self.agc_units = agc_units
        self.meas_out = meas_out
        self.td_exchange = td_exchange
        self.log_every = log_every
        self.native_noise = native_noise  # (n_samples, n_bus) multipliers relative to the initial sample
        self.noise_dt = noise_dt
        self._noise_k = 0
        self._pending: list = []
        self.bnd_s: dict[str, complex] = {}
        self.bnd_der: dict[str, float] = {}
        self.rec = TransmissionRecord()

    @staticmethod
    def declare(name, der_ids, buses, agc_units, interval) -> FederateDecl:
        pubs = ["freq_hz"] + [f"boundary_voltage.{b}" for b in buses] + [f"der_output.{d}" for d in der_ids]
        subs = [f"boundary_power.{b}" for b in buses] + [f"boundary_der.{b}" for b in buses]
        subs += [f"agc_setpoint.{u}" for u in agc_units]
        subs += [f"der_setpoint.{d}" for d in der_ids] + [f"der_limit.{d}" for d in der_ids]
        return FederateDecl(name, interval, pubs, subs)

    def _apply(self, msg) -> bool:
        """Apply one input; returns True when the network operating point changed."""
        kind, _, key = msg.topic.partition(".")
        dae = self.dae
        if kind == "boundary_power":
            self.bnd_s[key] = complex(msg.value)
            dae.set_boundary_load(key, self.bnd_s[key], self.bnd_der.get(key, 0.0))
            return True
        if kind == "boundary_der":
            self.bnd_der[key] = float(msg.value)
            if key in self.bnd_s:
                dae.set_boundary_load(key, self.bnd_s[key], self.bnd_der[key])
            return True
        if kind == "agc_setpoint":
            dae.set_agc(key, float(msg.value))
            return False
        if kind == "der_setpoint":
            dae.ders.p_ext[dae.ders.index(key)] = float(msg.value)
            return False
        if kind == "der_limit":
            dae.ders.limit[dae.ders.index(key)] = float(msg.value)
            return False
        raise ValueError(f"unexpected topic {msg.topic}")

    def _apply_due(self, t: float) -> None:
        changed = False
        while self._pending and self._pending[0].deliver_time <= t + EPS:
            changed |= self._apply(self._pending.pop(0))
        if self.native_noise is not None:
            k = min(int(np.floor(t / self.noise_dt + EPS)), len(self.native_noise) - 1)
            if k != self._noise_k:
                self._noise_k = k
                self.dae.set_native_multiplier(self.native_noise[k])
                changed = True
        if changed:
            self.dae.resolve_algebraic()

    def _record(self, full_only=False):
        dae, bank = self.dae, self.dae.ders
        t = dae.time
        if bank is not None and len(bank):
            cap = bank.available(t)
            self.rec.full_t.append(t)
            self.rec.full_out.append(bank.p_out.copy())
            self.rec.full_cap.append(cap)
            self.rec.full_limit.append(bank.limit.copy())
        if full_only:
            return
        f = dae.frequency()
        self.rec.t.append(t)
        self.rec.freq.append(f)
        if bank is not None and len(bank):
            self.rec.der_t.append(t)
            self.rec.p_out.append(bank.p_out.copy())
            self.rec.p_drp.append(bank.droop_mw(f))
            self.rec.p_ext.append(bank.p_ext.copy())
            self.rec.p_mppt.append(np.array([s(t) for s in bank.mppt]))
            self.rec.limit.append(bank.limit.copy())

    def _publish(self, ctx: FederateContext) -> None:
        t = ctx.time
        if _on_grid(t, self.meas_out):
            ctx.publish("freq_hz", self.dae.frequency())
        if _on_grid(t, self.td_exchange):
            for bus in self.feeder_buses.values():
                ctx.publish(f"boundary_voltage.{bus}", self.dae.get_boundary_voltage(bus))
            bank = self.dae.ders
            for i, d in enumerate(self.der_ids):
                ctx.publish(f"der_output.{d}", float(bank.p_out[i]))

    def initialize(self, ctx: FederateContext):
        self._record()
        self._publish(ctx)

    def on_grant(self, ctx: FederateContext):
        self._pending = sorted(self._pending + list(ctx.inputs), key=lambda m: (m.deliver_time, m.topic))
        dae = self.dae
        n_applied = len(dae.applied_events)
        for _ in range(dae.steps_until(ctx.time)):
            self._apply_due(dae.time)
            dae.step()
            self._record(full_only=dae.k % self.log_every != 0)
        self._apply_due(ctx.time)
        for t_ev, ev in dae.applied_events[n_applied:]:
            self.rec.events.append((t_ev, ev.kind, f"{ev.target} {ev.value:g}"))
        self._publish(ctx)


class FeederFederate:
    def __init__(
        self,
        name: str,
        feeder: FeederNetwork,
        bus: str,
        decl: FederateDecl,
        der_ids: list[str],
        p_caps: np.ndarray,
        load_series: np.ndarray,
        noise_dt: float = 1.0,
        vsm_refresh: float = 10.0,
        headroom_cfg: dict | None = None,
        td_exchange: float = 1.0,
    ):
        self.name = name
        self.decl = decl
        self.feeder = feeder
        self.bus = bus
        self.der_ids = der_ids  # global ids, aligned with feeder.ders
        self.local = {g: d.id for g, d in zip(der_ids, feeder.ders)}
        self.p_caps = np.asarray(p_caps, float)
        self.load_series = load_series
        self.noise_dt = noise_dt
        self.vsm_refresh = vsm_refresh
        self.hcfg = {"delta": 0.01, "v_lo": 0.95, "v_hi": 1.05, "current_limits": True, "monitor": "all",
                     **(headroom_cfg or {})}
        self.td_exchange = td_exchange
        self.v_sub = 1.0 + 0j
        self.der_p = {g: 0.0 for g in der_ids}
        self.last_built: float | None = None
        self.t: list[float] = []
        self.vstats: list[tuple[float, float, float, float]] = []
        self.s_sub: list[complex] = []
        self.refreshes: list[tuple[float, float, str]] = []

    @staticmethod
    def declare(name, bus, der_ids, interval) -> FederateDecl:
        pubs = [f"boundary_power.{bus}", f"boundary_der.{bus}", f"headroom.{name}"]
        pubs += [f"vsm_limit.{d}" for d in der_ids]
        subs = [f"boundary_voltage.{bus}"] + [f"der_output.{d}" for d in der_ids]
        return FederateDecl(name, interval, pubs, subs)

    def multiplier(self, t: float) -> float:
        k = min(int(np.floor(t / self.noise_dt + EPS)), len(self.load_series) - 1)
        return float(self.load_series[k])

    def _solve(self, ctx: FederateContext):
        for m in ctx.inputs:
            kind, _, key = m.topic.partition(".")
            if kind == "boundary_voltage":
                self.v_sub = complex(m.value)
            elif kind == "der_output":
                self.der_p[key] = float(m.value)
        t = ctx.time
        local_p = {self.local[g]: p for g, p in self.der_p.items()}
        sol = solve_feeder(self.feeder, self.v_sub, local_p, self.multiplier(t))
        s = boundary_power_mva(sol)
        ctx.publish(f"boundary_power.{self.bus}", s)
        ctx.publish(f"boundary_der.{self.bus}", float(sum(self.der_p.values())))
        self.t.append(t)
        self.vstats.append(sol.voltage_stats())
        self.s_sub.append(s)
        due = refresh_policy(t, self.last_built, self.vsm_refresh)
        if due and (self.vsm_refresh <= 0 or _on_grid(t, self.vsm_refresh)):
            self._refresh(ctx, sol, local_p)

    def _refresh(self, ctx, sol, local_p):
        h = self.hcfg
        vsm = build_vsm(self.feeder, self.v_sub, local_p, self.multiplier(ctx.time), h["delta"], ctx.time,
                        h["monitor"], base=sol)
        res = solve_headroom_lp(vsm, h["v_lo"], h["v_hi"], self.p_caps, h["current_limits"])
        limits = res.limits(vsm.p_base)
        ctx.publish(f"headroom.{self.name}", res.headroom)
        for g, lim in zip(self.der_ids, limits):
            ctx.publish(f"vsm_limit.{g}", float(lim))
        self.last_built = ctx.time
        self.refreshes.append((ctx.time, res.headroom, res.status))
        log.debug("t=%.1f %s headroom %.4f MW (%s)", ctx.time, self.name, res.headroom, res.status)

    def initialize(self, ctx):
        self._solve(ctx)

    def on_grant(self, ctx):
        if _on_grid(ctx.time, self.td_exchange):
            self._solve(ctx)


class AgcFederate:
    def __init__(self, decl: FederateDecl, area: AgcAreaState, table: ParticipationTable, enabled: bool = True):
        self.decl = decl
        self.area = area
        self.table = table
        self.enabled = enabled  # when off, ACE is still computed and logged but no signal is sent
        self.t: list[float] = []
        self.ace: list[float] = []
        self.signal: list[float] = []
        self.changes: list[tuple[float, float]] = []
        self._last_sent: float | None = None

    @staticmethod
    def declare(name, units, interval) -> FederateDecl:
        return FederateDecl(name, interval, ["ace_mw"] + [f"agc_setpoint.{u}" for u in units], ["freq_hz"])

    def _units(self):
        return [t.split(".", 1)[1] for t in self.decl.publications if t.startswith("agc_setpoint.")]

    def initialize(self, ctx):
        ctx.publish("ace_mw", 0.0)
        for u in self._units():
            ctx.publish(f"agc_setpoint.{u}", 0.0)
        self._last_sent = 0.0
        self.t.append(0.0)
        self.ace.append(0.0)
        self.signal.append(0.0)

    def on_grant(self, ctx):
        f = ctx.latest("freq_hz")
        ace = compute_ace(f, self.area) if f is not None else 0.0
        signal = pi_update(self.area, ace, self.area.measurement_period) if self.enabled else 0.0
        ctx.publish("ace_mw", ace)
        self.t.append(ctx.time)
        self.ace.append(ace)
        self.signal.append(signal)
        if _on_grid(ctx.time, self.area.signal_period):
            parts = dispatch_participation(signal, self.table)
            for u in self._units():
                ctx.publish(f"agc_setpoint.{u}", float(parts.get(u, 0.0)))
            if signal != self._last_sent:
                self.changes.append((ctx.time, signal))
            self._last_sent = signal


class AggregatorFederate:
    """Fans the feeder's AGC share out to its DERs and forwards feeder limits."""

    def __init__(self, decl: FederateDecl, feeder: str, der_ids: list[str], weights: np.ndarray | None = None):
        self.decl = decl
        self.feeder = feeder
        self.der_ids = der_ids
        w = np.ones(len(der_ids)) if weights is None else np.asarray(weights, float)
        self.weights = w / w.sum() if len(w) else w
        self.headroom: list[tuple[float, float]] = []

    @staticmethod
    def declare(name, feeder, der_ids, interval, agc=True) -> FederateDecl:
        pubs = [f"der_setpoint.{d}" for d in der_ids] + [f"der_limit.{d}" for d in der_ids]
        subs = [f"agc_setpoint.{feeder}"] if agc else []
        subs += [f"headroom.{feeder}"] + [f"vsm_limit.{d}" for d in der_ids]
        return FederateDecl(name, interval, pubs, subs)

    def _handle(self, ctx):
        for m in ctx.inputs:
            kind, _, key = m.topic.partition(".")
            if kind == "agc_setpoint":
                for d, w in zip(self.der_ids, self.weights):
                    ctx.publish(f"der_setpoint.{d}", float(w * m.value))
            elif kind == "vsm_limit":
                ctx.publish(f"der_limit.{key}", float(m.value))
            elif kind == "headroom":
                self.headroom.append((ctx.time, float(m.value)))

    def initialize(self, ctx):
        self._handle(ctx)

    def on_grant(self, ctx):
        self._handle(ctx)
