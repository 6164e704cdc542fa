"""Distributed PV active-power model: droop, AGC setpoint, limits and a first-order lag.

Single-unit functions mirror the per-DER equations; ``DerBank`` carries the
same logic vectorized across every DER in a run and is what the transmission
integrator steps.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

F0 = 60.0
DEFAULT_DEADBAND = 0.017


def droop_response(f: float, db_uf: float = DEFAULT_DEADBAND, db_of: float = DEFAULT_DEADBAND,
                   d_dn: float = 20.0) -> float:
    """Droop power in pu of nameplate; positive below the underfrequency band, negative above."""
    if not np.isfinite(f):
        raise ValueError("frequency must be finite")
    if db_uf < 0 or db_of < 0:
        raise ValueError("deadbands must be non-negative")
    lo, hi = F0 - db_uf, F0 + db_of
    if f < lo:
        return (lo - f) / F0 * d_dn
    if f > hi:
        return -(f - hi) / F0 * d_dn
    return 0.0


@dataclass
class DerState:
    id: str
    feeder: str
    node: str
    p_ref: float
    p_caps: float
    p_mppt: float
    p_out: float = 0.0
    p_drp: float = 0.0  # MW
    p_ext: float = 0.0
    p_headroom: float = np.inf  # MW above P_ref allowed by the feeder
    tg: float = 0.1
    d_dn: float = 20.0
    db_uf: float = DEFAULT_DEADBAND
    db_of: float = DEFAULT_DEADBAND


def command_limit(der: DerState) -> float:
    """Output command: requested power clipped by MPPT, nameplate and feeder headroom."""
    request = der.p_drp + der.p_ext + der.p_ref
    return max(0.0, min(request, der.p_mppt, der.p_caps, der.p_ref + der.p_headroom))


def step_der(der: DerState, p_cmd: float, dt: float) -> DerState:
    """One forward-Euler step of the output lag, clamped to the available power."""
    if der.tg <= 0:
        raise ValueError("Tg must be positive")
    p = der.p_out + dt / der.tg * (p_cmd - der.p_out)
    p = min(max(p, 0.0), der.p_mppt, der.p_caps)
    return DerState(**{**der.__dict__, "p_out": p})


@dataclass
class MpptSeries:
    """Available PV power on a fixed sampling grid, read with zero-order hold."""

    values: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("MPPT series must be a non-empty 1-D array")

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.values) - 1) * self.dt

    def __call__(self, t: float) -> float:
        return sample_mppt(self, t)

    @classmethod
    def constant(cls, value: float, stop_time: float, dt: float = 1.0) -> "MpptSeries":
        return cls(np.full(int(np.ceil(stop_time / dt)) + 1, float(value)), dt)

    @classmethod
    def from_csv(cls, path: str | Path) -> "MpptSeries":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        t = np.array([float(r[0]) for r in rows])
        mw = np.array([float(r[1]) for r in rows])
        if len(t) > 1:
            steps = np.diff(t)
            if not np.allclose(steps, steps[0]):
                raise ValueError(f"{path}: MPPT samples must be evenly spaced")
            return cls(mw, float(steps[0]), float(t[0]))
        return cls(mw, 1.0, float(t[0]) if len(t) else 0.0)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def sample_mppt(series: MpptSeries, t: float) -> float:
    if t < series.t0 - 1e-9 or t > series.t_end + 1e-9:
        raise ValueError(f"t={t} outside MPPT series range [{series.t0}, {series.t_end}]")
    k = int(np.floor((t - series.t0) / series.dt + 1e-9))
    return float(series.values[min(k, len(series.values) - 1)])


@dataclass
class DerBank:
    """All DERs of a run as parallel arrays, in a fixed order."""

    ids: list[str]
    feeders: list[str]
    p_ref: np.ndarray
    p_caps: np.ndarray
    mppt: list[MpptSeries]
    tg: np.ndarray
    d_dn: np.ndarray
    db_uf: np.ndarray
    db_of: np.ndarray
    ramp: np.ndarray | None = None  # MW/s, inf for none
    p_out: np.ndarray = field(init=False)
    p_ext: np.ndarray = field(init=False)
    limit: np.ndarray = field(init=False)  # absolute feeder limit P_ref + P_headroom, MW

    def __post_init__(self):
        n = len(self.ids)
        for name in ("p_ref", "p_caps", "tg", "d_dn", "db_uf", "db_of"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            setattr(self, name, arr)
        if np.any(self.tg <= 0):
            raise ValueError("Tg must be positive")
        self.ramp = np.full(n, np.inf) if self.ramp is None else np.asarray(self.ramp, float)
        self.p_ext = np.zeros(n)
        self.limit = np.full(n, np.inf)
        self.p_out = np.minimum(self.p_ref, self.available(0.0))
        self._index = {d: i for i, d in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def index(self, der_id: str) -> int:
        return self._index[der_id]

    def available(self, t: float) -> np.ndarray:
        mppt = np.array([sample_mppt(s, t) for s in self.mppt])
        return np.minimum(mppt, self.p_caps)

    def droop_mw(self, f: float) -> np.ndarray:
        lo, hi = F0 - self.db_uf, F0 + self.db_of
        pu = np.where(f < lo, (lo - f) / F0 * self.d_dn, np.where(f > hi, -(f - hi) / F0 * self.d_dn, 0.0))
        return pu * self.p_caps

    def command(self, f: float, t: float) -> np.ndarray:
        request = self.droop_mw(f) + self.p_ext + self.p_ref
        return np.maximum(0.0, np.minimum.reduce([request, self.available(t), self.limit]))

    def step(self, f: float, t: float, dt: float) -> np.ndarray:
        """Advance outputs from t to t + dt using the frequency measured at t."""
        cmd = self.command(f, t)
        dp = dt / self.tg * (cmd - self.p_out)
        dp = np.clip(dp, -self.ramp * dt, self.ramp * dt)
        self.p_out = np.clip(self.p_out + dp, 0.0, self.available(t + dt))
        return self.p_out
