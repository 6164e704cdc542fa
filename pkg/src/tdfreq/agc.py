"""Single-area automatic generation control: ACE, PI with sample-and-hold, participation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

F0 = 60.0


class ParticipationError(ValueError):
    pass


@dataclass
class AgcAreaState:
    b: float  # frequency bias, MW per 0.1 Hz
    kp: float = 0.1
    ki: float = 0.05
    f_db: float = 0.017
    f0: float = F0
    signal_period: float = 4.0
    measurement_period: float = 0.5
    windup_limit: float = np.inf  # clamp on Ki * integral, MW
    integral: float = 0.0  # MW s
    last_ace: float = 0.0
    last_signal: float = 0.0
    raw: float = 0.0
    ticks: int = 0

    def __post_init__(self):
        if self.b <= 0:
            raise ValueError("frequency bias B must be positive")
        if self.f_db < 0:
            raise ValueError("deadband must be non-negative")
        ratio = self.signal_period / self.measurement_period
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("signal period must be an integer multiple of the measurement period")
        self.hold_ticks = int(round(ratio))


def compute_ace(f_meas: float, area: AgcAreaState) -> float:
    if not np.isfinite(f_meas):
        raise ValueError("measured frequency must be finite")
    if abs(f_meas - area.f0) <= area.f_db + 1e-12:  # band edges are inclusive despite rounding
        return 0.0
    return -10.0 * area.b * (f_meas - area.f0)


def pi_update(area: AgcAreaState, ace: float, dt: float | None = None) -> float:
    """Advance the PI by one measurement period; returns the held area signal.

    The held value changes only when the tick count reaches a multiple of the
    signal period, so the output is piecewise constant on that grid.
    """
    dt = area.measurement_period if dt is None else dt
    if abs(dt - area.measurement_period) > 1e-9:
        raise ValueError(f"pi_update expects dt={area.measurement_period}, got {dt}")
    area.integral += ace * dt
    if area.ki > 0 and np.isfinite(area.windup_limit):
        bound = area.windup_limit / area.ki
        area.integral = float(np.clip(area.integral, -bound, bound))
    area.last_ace = ace
    area.raw = area.kp * ace + area.ki * area.integral
    area.ticks += 1
    if area.ticks % area.hold_ticks == 0:
        area.last_signal = area.raw
    return area.last_signal


@dataclass
class ParticipationTable:
    entries: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.entries:
            raise ParticipationError("participation table is empty")
        beta = np.array(list(self.entries.values()), dtype=float)
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ParticipationError("participation factors must be finite and non-negative")
        if abs(beta.sum() - 1.0) > 1e-9:
            raise ParticipationError(f"participation factors sum to {beta.sum():.12g}, expected 1")

    @property
    def units(self) -> list[str]:
        return list(self.entries)


def dispatch_participation(signal: float, table: ParticipationTable) -> dict[str, float]:
    """Split the area signal by participation factor.

    The last nonzero unit absorbs floating-point remainder so the parts sum to
    the signal exactly.
    """
    units = table.units
    out = {u: table.entries[u] * signal for u in units}
    nonzero = [u for u in units if table.entries[u] > 0]
    if nonzero and signal != 0.0:
        last = nonzero[-1]
        rest = sum(v for u, v in out.items() if u != last)
        out[last] = signal - rest
    return out
