"""Scenario files, stochastic load series and the end-to-end co-simulation run.

A scenario is one YAML document. Paths inside it (grid, feeders, MPPT series)
are resolved relative to the scenario file. See ``docs/scenario_format.md``
for every key and its default.
"""
from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .agc import AgcAreaState, ParticipationTable
from .der import DEFAULT_DEADBAND, DerBank, MpptSeries
from .distribution import FeederNetwork, boundary_power_mva, solve_feeder
from .federates import AgcFederate, AggregatorFederate, FeederFederate, TransmissionFederate
from .kernel import Federation, FederationLog, TopicConfig, run_federation
from .transmission import Event, Grid, GridError, TransmissionDae, solve_power_flow

log = logging.getLogger(__name__)

PREPASS_TOL = 1e-10
PREPASS_MAX_ITER = 50
LOG_DT = 0.1


class ScenarioError(ValueError):
    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


# -- configuration ----------------------------------------------------------------


@dataclass
class Cadences:
    td_exchange: float = 1.0
    meas_out: float = 0.5
    agc_period: float = 4.0
    internal_dt: float = 1 / 30
    vsm_refresh: float = 10.0


@dataclass
class FeederSpec:
    name: str
    file: Path
    bus: str
    load_scale: float = 1.0


@dataclass
class DerConfig:
    p_ref: float = 0.5
    p_caps: float | None = None  # None: the feeder's DER rating
    tg: float = 0.1
    d_dn: float = 20.0
    db_uf: float = DEFAULT_DEADBAND
    db_of: float = DEFAULT_DEADBAND
    ramp: float = np.inf  # MW/s
    mppt: list[Path] | float = 0.8
    overrides: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass
class AgcConfig:
    enabled: bool = True
    b: float = 20.0
    kp: float = 0.2
    ki: float = 0.1
    f_db: float = DEFAULT_DEADBAND
    participation: dict[str, float] = field(default_factory=dict)


@dataclass
class HeadroomConfig:
    delta: float = 0.01
    v_lo: float = 0.95
    v_hi: float = 1.05
    current_limits: bool = True
    monitor: str = "all"


@dataclass
class FederationConfig:
    consume_same_time: bool = True
    latency: dict[str, float] = field(default_factory=dict)
    drop: dict[str, float] = field(default_factory=dict)
    workers: int = 1


@dataclass
class Scenario:
    name: str
    path: Path | None
    grid: Path
    feeders: list[FeederSpec]
    stop_time: float = 60.0
    seed: int = 0
    cadences: Cadences = field(default_factory=Cadences)
    ders: DerConfig = field(default_factory=DerConfig)
    agc: AgcConfig = field(default_factory=AgcConfig)
    headroom: HeadroomConfig = field(default_factory=HeadroomConfig)
    events: list[Event] = field(default_factory=list)
    load_noise_std: float = 0.0
    federation: FederationConfig = field(default_factory=FederationConfig)
    output: Path | None = None


# -- parsing ----------------------------------------------------------------------


class _Lines:
    """Line numbers of keys in a composed YAML document."""

    def __init__(self, node):
        self.root = node

    def __call__(self, *keys) -> int | None:
        node, best = self.root, None
        for key in keys:
            if node is None:
                break
            best = node.start_mark.line + 1
            nxt = None
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == str(key):
                        nxt = v
                        best = k.start_mark.line + 1
                        break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                nxt = node.value[key]
            node = nxt
        if node is not None:
            best = node.start_mark.line + 1
        return best


def _parse_time(value: Any) -> float:
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


_TOP_KEYS = {"name", "grid", "feeders", "stop_time", "seed", "cadences", "ders", "agc", "headroom", "events",
             "load_noise", "federation", "output"}


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError("scenario file not found", path)
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", path,
                            mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ScenarioError("top level must be a mapping", path, 1)
    return scenario_from_dict(data, path, _Lines(node))


def scenario_from_dict(data: dict, path: Path | None = None, lines: _Lines | None = None) -> Scenario:
    base = path.parent if path is not None else Path.cwd()
    line = lines or (lambda *k: None)

    def fail(msg, *keys):
        raise ScenarioError(msg, path, line(*keys))

    def num(value, *keys, positive=False, nonneg=False, parse=float):
        try:
            x = parse(value)
        except (TypeError, ValueError, ZeroDivisionError):
            fail(f"{'.'.join(map(str, keys))}: expected a number, got {value!r}", *keys)
        if positive and not x > 0:
            fail(f"{'.'.join(map(str, keys))} must be > 0", *keys)
        if nonneg and not x >= 0:
            fail(f"{'.'.join(map(str, keys))} must be >= 0", *keys)
        return x

    def file(value, *keys) -> Path:
        if not isinstance(value, str):
            fail(f"{'.'.join(map(str, keys))}: expected a file path", *keys)
        p = (base / value).resolve()
        if not p.exists():
            fail(f"file not found: {p}", *keys)
        return p

    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        fail(f"unknown key {unknown[0]!r}", unknown[0])
    for key in ("grid", "feeders"):
        if key not in data:
            fail(f"missing required key {key!r}")
    name = str(data.get("name", path.stem if path else "scenario"))
    grid = file(data["grid"], "grid")
    stop_time = num(data.get("stop_time", 60.0), "stop_time", positive=True)
    seed = int(num(data.get("seed", 0), "seed", nonneg=True, parse=int))

    cad = Cadences()
    raw = data.get("cadences") or {}
    for key, value in raw.items():
        if not hasattr(cad, key):
            fail(f"unknown cadence {key!r}", "cadences", key)
        setattr(cad, key, num(value, "cadences", key, positive=key != "vsm_refresh", nonneg=True,
                              parse=_parse_time))
    ratio = cad.td_exchange / cad.internal_dt
    if abs(ratio - round(ratio)) > 1e-9:
        fail(f"internal_dt={cad.internal_dt:g} does not divide td_exchange={cad.td_exchange:g}",
             "cadences", "internal_dt" if "internal_dt" in raw else "td_exchange")
    for key in ("meas_out", "agc_period"):
        r = getattr(cad, key) / cad.internal_dt
        if abs(r - round(r)) > 1e-9:
            fail(f"{key} must be a multiple of internal_dt", "cadences", key)
    r = cad.agc_period / cad.meas_out
    if abs(r - round(r)) > 1e-9:
        fail("agc_period must be a multiple of meas_out", "cadences", "agc_period")

    feeders = []
    raw_feeders = data["feeders"]
    if not isinstance(raw_feeders, list) or not raw_feeders:
        fail("feeders must be a non-empty list", "feeders")
    for i, f in enumerate(raw_feeders):
        if not isinstance(f, dict):
            fail("feeder entries must be mappings", "feeders", i)
        for key in ("file", "bus"):
            if key not in f:
                fail(f"feeder entry missing {key!r}", "feeders", i)
        fpath = file(f["file"], "feeders", i, "file")
        feeders.append(FeederSpec(str(f.get("name", fpath.stem)), fpath, str(f["bus"]),
                                  num(f.get("load_scale", 1.0), "feeders", i, "load_scale", positive=True)))
    names = [f.name for f in feeders]
    if len(set(names)) != len(names):
        fail("feeder names must be unique", "feeders")
    buses = [f.bus for f in feeders]
    if len(set(buses)) != len(buses):
        fail("each boundary bus can host only one feeder", "feeders")

    ders = DerConfig()
    raw = data.get("ders") or {}
    for key, value in raw.items():
        if key == "mppt":
            if isinstance(value, list):
                ders.mppt = [file(v, "ders", "mppt", j) for j, v in enumerate(value)]
                if not ders.mppt:
                    fail("mppt file list is empty", "ders", "mppt")
            else:
                ders.mppt = num(value, "ders", "mppt", nonneg=True)
        elif key == "overrides":
            if not isinstance(value, dict):
                fail("overrides must map DER ids to settings", "ders", key)
            for der_id, settings in value.items():
                for k, v in (settings or {}).items():
                    if k not in ("p_ref", "p_caps", "tg", "d_dn", "db_uf", "db_of", "ramp"):
                        fail(f"unknown DER setting {k!r}", "ders", "overrides", der_id, k)
                    num(v, "ders", "overrides", der_id, k, nonneg=True)
            ders.overrides = {str(k): {kk: float(vv) for kk, vv in (v or {}).items()} for k, v in value.items()}
        elif key == "deadband":
            ders.db_uf = ders.db_of = num(value, "ders", key, nonneg=True)
        elif key in ("p_ref", "p_caps", "tg", "d_dn", "db_uf", "db_of", "ramp"):
            setattr(ders, key, num(value, "ders", key, nonneg=True, positive=key == "tg"))
        else:
            fail(f"unknown DER setting {key!r}", "ders", key)

    agc = AgcConfig()
    raw = data.get("agc") or {}
    for key, value in raw.items():
        if key == "enabled":
            agc.enabled = bool(value)
        elif key == "participation":
            if not isinstance(value, dict) or not value:
                fail("participation must be a non-empty mapping", "agc", key)
            agc.participation = {str(k): num(v, "agc", key, k, nonneg=True) for k, v in value.items()}
            total = sum(agc.participation.values())
            if abs(total - 1.0) > 1e-9:
                fail(f"participation factors sum to {total:.12g}, expected 1", "agc", key)
        elif key in ("b", "kp", "ki", "f_db"):
            setattr(agc, key, num(value, "agc", key, nonneg=True, positive=key == "b"))
        else:
            fail(f"unknown AGC setting {key!r}", "agc", key)

    head = HeadroomConfig()
    raw = data.get("headroom") or {}
    for key, value in raw.items():
        if key in ("current_limits",):
            head.current_limits = bool(value)
        elif key == "monitor":
            if value not in ("all", "der"):
                fail("monitor must be 'all' or 'der'", "headroom", key)
            head.monitor = value
        elif key in ("delta", "v_lo", "v_hi"):
            setattr(head, key, num(value, "headroom", key, positive=True))
        else:
            fail(f"unknown headroom setting {key!r}", "headroom", key)
    if head.v_lo >= head.v_hi:
        fail("v_lo must be below v_hi", "headroom")

    events = []
    for i, ev in enumerate(data.get("events") or []):
        if not isinstance(ev, dict) or not {"kind", "target", "time"} <= set(ev):
            fail("events need kind, target and time", "events", i)
        try:
            events.append(Event(str(ev["kind"]), str(ev["target"]), num(ev["time"], "events", i, "time", nonneg=True),
                                num(ev.get("value", 0.0), "events", i, "value")))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            fail(str(exc), "events", i, "kind")

    noise = data.get("load_noise") or {}
    std = num(noise.get("std", 0.0), "load_noise", "std", nonneg=True) if isinstance(noise, dict) else \
        fail("load_noise must be a mapping", "load_noise")

    fed = FederationConfig()
    raw = data.get("federation") or {}
    for key, value in raw.items():
        if key == "consume_same_time":
            fed.consume_same_time = bool(value)
        elif key in ("latency", "drop"):
            setattr(fed, key, {str(k): num(v, "federation", key, k, nonneg=True) for k, v in (value or {}).items()})
        elif key == "workers":
            fed.workers = int(num(value, "federation", key, positive=True, parse=int))
        else:
            fail(f"unknown federation setting {key!r}", "federation", key)

    output = data.get("output")
    output = (base / output) if output else None
    return Scenario(name, path, grid, feeders, stop_time, seed, cad, ders, agc, head, events, std, fed, output)


# -- load noise -------------------------------------------------------------------


@dataclass
class LoadSeries:
    """Load multipliers held constant over each sample period."""

    values: np.ndarray
    dt: float = 1.0

    def __call__(self, t: float) -> float:
        k = min(int(np.floor(t / self.dt + 1e-9)), len(self.values) - 1)
        return float(self.values[k])


def generate_load_series(seed: int, std: float, n_steps: int, dt: float = 1.0, stream: int = 0) -> LoadSeries:
    """I.i.d. Gaussian multipliers with mean 1; ``stream`` selects an independent sequence per load."""
    if std < 0:
        raise ValueError("std must be >= 0")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if std == 0:
        return LoadSeries(np.ones(n_steps), dt)
    rng = np.random.default_rng([seed, stream])
    return LoadSeries(1.0 + std * rng.standard_normal(n_steps), dt)


# -- run ---------------------------------------------------------------------------


@dataclass
class RunResults:
    scenario: Scenario
    t: np.ndarray  # logging grid for frequency and DER series
    freq: np.ndarray
    ace_t: np.ndarray
    ace: np.ndarray
    agc_signal: np.ndarray
    der_ids: list[str]
    p_out: np.ndarray  # (T, m) MW on the logging grid
    p_drp: np.ndarray
    p_ext: np.ndarray
    p_mppt: np.ndarray
    vsm_limit: np.ndarray
    feeder_t: np.ndarray  # 1 s grid
    voltage: dict[str, np.ndarray]  # feeder -> (T1, 4) mean, std, min, max
    substation: dict[str, np.ndarray]  # feeder -> (T1,) complex MVA
    events: list[tuple[float, str, str]]
    summary: dict[str, dict[str, float]]
    wall_clock: float
    log: FederationLog
    trace: dict[str, np.ndarray]  # every internal step: t, p_out, available, limit
    p_ref: np.ndarray
    p_caps: np.ndarray
    tg: np.ndarray


def summary_stats(freq: np.ndarray, ace: np.ndarray) -> dict[str, dict[str, float]]:
    out = {}
    for name, x in (("freq_hz", freq), ("ace_mw", ace)):
        x = np.asarray(x, float)
        out[name] = {"mean": float(np.mean(x)), "std": float(np.std(x)), "min": float(np.min(x)),
                     "max": float(np.max(x))}
    return out


@dataclass
class _Build:
    grid: Grid
    feeders: list[FeederNetwork]
    bank: DerBank
    der_ids: list[list[str]]  # per feeder, global ids
    net: dict[str, complex]
    feeder_series: list[LoadSeries]
    native_noise: np.ndarray | None


def _der_bank(sc: Scenario, feeders: list[FeederNetwork]) -> tuple[DerBank, list[list[str]]]:
    cfg = sc.ders
    ids, owner, per_feeder = [], [], []
    params = {k: [] for k in ("p_ref", "p_caps", "tg", "d_dn", "db_uf", "db_of", "ramp")}
    for spec, fn in zip(sc.feeders, feeders):
        gids = []
        for site in fn.ders:
            gid = f"{spec.name}.{site.id}"
            gids.append(gid)
            ids.append(gid)
            owner.append(spec.name)
            over = cfg.overrides.get(gid, {})
            caps = cfg.p_caps if cfg.p_caps is not None else site.rating_mw
            for k in params:
                default = caps if k == "p_caps" else getattr(cfg, k)
                params[k].append(over.get(k, default))
        per_feeder.append(gids)
    unknown = set(cfg.overrides) - set(ids)
    if unknown:
        raise ScenarioError(f"overrides for unknown DERs {sorted(unknown)}", sc.path)
    if isinstance(cfg.mppt, list):
        series = [MpptSeries.from_csv(p) for p in cfg.mppt]
        mppt = [series[i % len(series)] for i in range(len(ids))]
    else:
        mppt = [MpptSeries.constant(cfg.mppt, sc.stop_time) for _ in ids]
    for s in mppt:
        if s.t0 > 0 or s.t_end < sc.stop_time - 1e-9:
            raise ScenarioError(f"MPPT series covers [{s.t0}, {s.t_end}] s, shorter than the run", sc.path)
    if np.any(np.array(params["p_ref"]) > np.array(params["p_caps"]) + 1e-12):
        raise ScenarioError("DER p_ref exceeds p_caps", sc.path)
    bank = DerBank(ids, owner, np.array(params["p_ref"]), np.array(params["p_caps"]), mppt,
                   np.array(params["tg"]), np.array(params["d_dn"]), np.array(params["db_uf"]),
                   np.array(params["db_of"]), np.array(params["ramp"]))
    return bank, per_feeder


def _local(fn: FeederNetwork, p: np.ndarray) -> dict[str, float]:
    return {site.id: float(x) for site, x in zip(fn.ders, p)}


def build(sc: Scenario) -> _Build:
    """Load data files, split bus loads, draw noise and find the coupled initial operating point."""
    with open(sc.grid) as fh:
        gdata = yaml.safe_load(fh)
    gdata["boundaries"] = [{"bus": f.bus, "feeder": f.name} for f in sc.feeders]
    try:
        grid = Grid.from_dict(gdata)
    except GridError as exc:
        raise ScenarioError(str(exc), sc.path) from exc
    feeders = [FeederNetwork.from_yaml(f.file).scaled(f.load_scale) for f in sc.feeders]
    bank, der_ids = _der_bank(sc, feeders)
    slices, start = [], 0
    for gids in der_ids:
        slices.append(slice(start, start + len(gids)))
        start += len(gids)

    # grid loads are totals: remove each feeder's gross demand at nominal voltage
    for spec, fn, sl in zip(sc.feeders, feeders, slices):
        sol = solve_feeder(fn, 1.0, _local(fn, bank.p_out[sl]), 1.0)
        gross = boundary_power_mva(sol) + float(bank.p_out[sl].sum())
        bus = grid.buses[grid.index[spec.bus]]
        p, q = bus.p_load - gross.real, bus.q_load - gross.imag
        if p < -1e-9:
            raise ScenarioError(f"bus {spec.bus} carries {bus.p_load:g} MW, less than feeder {spec.name} "
                                f"demand {gross.real:.3f} MW", sc.path)
        bus.p_load, bus.q_load = max(p, 0.0), q

    n_samples = int(np.ceil(sc.stop_time)) + 1
    feeder_series = [generate_load_series(sc.seed, sc.load_noise_std, n_samples, 1.0, 1000 + i)
                     for i in range(len(feeders))]
    native_noise = None
    if sc.load_noise_std > 0:
        m = np.ones((n_samples, grid.n))
        for k, bus in enumerate(grid.buses):
            if bus.p_load or bus.q_load:
                m[:, k] = generate_load_series(sc.seed, sc.load_noise_std, n_samples, 1.0, k).values
        for k, bus in enumerate(grid.buses):  # the first sample defines the initial operating point
            bus.p_load *= m[0, k]
            bus.q_load *= m[0, k]
        native_noise = m / m[0]

    v = {f.bus: 1.0 + 0j for f in sc.feeders}
    net = {}
    for it in range(PREPASS_MAX_ITER):
        for spec, fn, sl, ser in zip(sc.feeders, feeders, slices, feeder_series):
            sol = solve_feeder(fn, v[spec.bus], _local(fn, bank.p_out[sl]), ser.values[0])
            net[spec.bus] = boundary_power_mva(sol)
        pf = solve_power_flow(grid, net)
        new = {b: complex(pf.v[grid.index[b]]) for b in v}
        change = max(abs(new[b] - v[b]) for b in v)
        v = new
        if change < PREPASS_TOL:
            break
    else:
        raise ScenarioError(f"initial transmission/feeder operating point did not converge (last change "
                            f"{change:.3e} pu)", sc.path)
    log.info("initial operating point after %d coupled iterations", it + 1)
    return _Build(grid, feeders, bank, der_ids, net, feeder_series, native_noise)


def run(sc: Scenario) -> RunResults:
    wall0 = _time.perf_counter()
    b = build(sc)
    cad = sc.cadences
    grid, bank = b.grid, b.bank
    der_bus = [spec.bus for spec, gids in zip(sc.feeders, b.der_ids) for _ in gids]
    dae = TransmissionDae(grid, b.net, bank, der_bus, dt=cad.internal_dt)
    try:
        dae.schedule(sc.events)
    except GridError as exc:
        raise ScenarioError(str(exc), sc.path) from exc

    part = dict(sc.agc.participation) or {g.id: 1.0 / len(grid.generators) for g in grid.generators}
    gen_ids = {g.id for g in grid.generators}
    feeder_names = {f.name for f in sc.feeders}
    bad = set(part) - gen_ids - feeder_names
    if bad:
        raise ScenarioError(f"participation names unknown units {sorted(bad)}", sc.path)
    no_gov = [u for u in part if u in gen_ids and grid.generator(u).governor is None]
    if no_gov:
        raise ScenarioError(f"AGC units without governors: {no_gov}", sc.path)
    table = ParticipationTable(part)
    gen_units = [u for u in part if u in gen_ids]
    windup = sum(max(grid.generator(u).governor.p_max - grid.generator(u).p_mw, 0.0) for u in gen_units)
    windup += float(np.sum(bank.p_caps - bank.p_ref))
    area = AgcAreaState(sc.agc.b, sc.agc.kp, sc.agc.ki, sc.agc.f_db, signal_period=cad.agc_period,
                        measurement_period=cad.meas_out, windup_limit=windup)

    federation = Federation(sc.seed, _topic_config(sc), sc.federation.consume_same_time)
    log_every = max(1, int(round(LOG_DT / cad.internal_dt)))
    buses = [f.bus for f in sc.feeders]
    tdecl = TransmissionFederate.declare("transmission", bank.ids, buses, gen_units, cad.meas_out)
    trans = TransmissionFederate(dae, tdecl, bank.ids, {f.name: f.bus for f in sc.feeders}, gen_units,
                                 cad.meas_out, cad.td_exchange, log_every, b.native_noise)
    feds: list = [trans]
    feeder_feds = []
    for spec, fn, gids, ser in zip(sc.feeders, b.feeders, b.der_ids, b.feeder_series):
        decl = FeederFederate.declare(spec.name, spec.bus, gids, cad.td_exchange)
        idx = [bank.index(g) for g in gids]
        ff = FeederFederate(spec.name, fn, spec.bus, decl, gids, bank.p_caps[idx], ser.values, ser.dt,
                            cad.vsm_refresh, vars(sc.headroom), cad.td_exchange)
        feeder_feds.append(ff)
        feds.append(ff)
    agc = AgcFederate(AgcFederate.declare("agc", list(part), cad.meas_out), area, table, sc.agc.enabled)
    feds.append(agc)
    for spec, gids in zip(sc.feeders, b.der_ids):
        decl = AggregatorFederate.declare(f"aggregator.{spec.name}", spec.name, gids, cad.td_exchange,
                                          agc=spec.name in part)
        feds.append(AggregatorFederate(decl, spec.name, gids))
    for fed in feds:
        federation.register_federate(fed.decl)
    fed_log = run_federation(federation, feds, sc.stop_time, sc.federation.workers)
    wall = _time.perf_counter() - wall0

    rec = trans.rec
    events = list(rec.events)
    events += [(t, "agc_signal", f"{s!r}") for t, s in agc.changes]
    for ff in feeder_feds:
        events += [(t, "headroom_refresh", f"{ff.name} {h!r} {status}") for t, h, status in ff.refreshes]
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    freq = np.array(rec.freq)
    ace = np.array(agc.ace)
    m = len(bank)
    stack = (lambda xs: np.array(xs).reshape(len(xs), m))
    return RunResults(
        scenario=sc, t=np.array(rec.t), freq=freq, ace_t=np.array(agc.t), ace=ace, agc_signal=np.array(agc.signal),
        der_ids=list(bank.ids), p_out=stack(rec.p_out), p_drp=stack(rec.p_drp), p_ext=stack(rec.p_ext),
        p_mppt=stack(rec.p_mppt), vsm_limit=stack(rec.limit),
        feeder_t=np.array(feeder_feds[0].t),
        voltage={ff.name: np.array(ff.vstats) for ff in feeder_feds},
        substation={ff.name: np.array(ff.s_sub) for ff in feeder_feds},
        events=events, summary=summary_stats(freq, ace), wall_clock=wall, log=fed_log,
        trace={"t": np.array(rec.full_t), "p_out": stack(rec.full_out), "available": stack(rec.full_cap),
               "limit": stack(rec.full_limit)},
        p_ref=bank.p_ref.copy(), p_caps=bank.p_caps.copy(), tg=bank.tg.copy(),
    )


def _topic_config(sc: Scenario) -> dict[str, TopicConfig]:
    cfg = {}
    for topic in set(sc.federation.latency) | set(sc.federation.drop):
        cfg[topic] = TopicConfig(sc.federation.latency.get(topic, 0.0), sc.federation.drop.get(topic, 0.0))
    return cfg


def with_overrides(sc: Scenario, seed: int | None = None, stop_time: float | None = None,
                   no_agc: bool = False, output: str | Path | None = None) -> Scenario:
    """Copy of ``sc`` with command-line overrides applied."""
    out = replace(sc)
    if seed is not None:
        out.seed = int(seed)
    if stop_time is not None:
        if stop_time <= 0:
            raise ScenarioError("stop_time must be > 0")
        out.stop_time = float(stop_time)
    if no_agc:
        out.agc = replace(sc.agc, enabled=False)
    if output is not None:
        out.output = Path(output)
    return out
