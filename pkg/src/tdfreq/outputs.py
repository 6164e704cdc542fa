"""CSV, summary and plot-data files for a completed run.

Floats are written with 17 significant digits so every value read back is the
exact double that was in memory.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .scenario import RunResults, summary_stats

FMT = "%.17g"
HIST_BINS = 40


def _f(x: float) -> str:
    return FMT % x


def _write(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def emit_outputs(res: RunResults, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def emit(name, header, rows):
        path = out / name
        _write(path, header, rows)
        written.append(path)

    emit("frequency.csv", ["t_s", "freq_hz"], zip(res.t, res.freq))
    emit("ace.csv", ["t_s", "ace_mw", "agc_signal_mw"], zip(res.ace_t, res.ace, res.agc_signal))
    emit("der.csv", ["t_s", "der", "p_out", "p_drp", "p_ext", "p_mppt", "vsm_limit"], (
        (t, d, res.p_out[k, j], res.p_drp[k, j], res.p_ext[k, j], res.p_mppt[k, j], res.vsm_limit[k, j])
        for k, t in enumerate(res.t) for j, d in enumerate(res.der_ids)
    ))
    emit("voltage_envelope.csv", ["t_s", "feeder", "mean", "std", "min", "max"], (
        (t, name, *map(float, stats[k]))
        for k, t in enumerate(res.feeder_t) for name, stats in res.voltage.items()
    ))
    emit("substation.csv", ["t_s", "feeder", "p_mw", "q_mvar"], (
        (t, name, float(s[k].real), float(s[k].imag))
        for k, t in enumerate(res.feeder_t) for name, s in res.substation.items()
    ))
    counts, edges = np.histogram(res.freq, bins=HIST_BINS)
    emit("frequency_hist.csv", ["bin_lo_hz", "bin_hi_hz", "count"],
         ((float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)))
    emit("events.csv", ["t_s", "kind", "detail"], ((float(t), k, d) for t, k, d in res.events))

    path = out / "summary.txt"
    path.write_text(format_summary(res.summary))
    written.append(path)
    # wall clock varies run to run, so it stays out of the deterministic files
    path = out / "run_info.json"
    path.write_text(json.dumps({"scenario": res.scenario.name, "seed": res.scenario.seed,
                                "stop_time": res.scenario.stop_time, "wall_clock_s": res.wall_clock}, indent=2))
    written.append(path)
    return written


def format_summary(summary: dict[str, dict[str, float]]) -> str:
    lines = [f"{'quantity':<10} {'mean':>24} {'std':>24} {'min':>24} {'max':>24}"]
    for name, st in summary.items():
        lines.append(f"{name:<10} " + " ".join(f"{_f(st[k]):>24}" for k in ("mean", "std", "min", "max")))
    return "\n".join(lines) + "\n"


def read_series(path: str | Path) -> dict[str, np.ndarray]:
    """Numeric columns of an emitted CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in body])
        except ValueError:
            cols[name] = np.array([r[j] for r in body])
    return cols


def summary_from_csv(out_dir: str | Path) -> dict[str, dict[str, float]]:
    out = Path(out_dir)
    freq = read_series(out / "frequency.csv")["freq_hz"]
    ace = read_series(out / "ace.csv")["ace_mw"]
    return summary_stats(freq, ace)


def plot_results(out_dir: str | Path) -> list[Path]:
    """Render the emitted plot-data files to PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    made = []
    fr = read_series(out / "frequency.csv")
    hist = read_series(out / "frequency_hist.csv")
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3.5))
    a.plot(fr["t_s"], fr["freq_hz"])
    a.set_xlabel("time (s)")
    a.set_ylabel("frequency (Hz)")
    b.bar(hist["bin_lo_hz"], hist["count"], width=hist["bin_hi_hz"] - hist["bin_lo_hz"], align="edge")
    b.set_xlabel("frequency (Hz)")
    fig.tight_layout()
    made.append(out / "frequency.png")
    fig.savefig(made[-1], dpi=120)
    plt.close(fig)

    der = read_series(out / "der.csv")
    first = der["der"][0]
    sel = der["der"] == first
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for col in ("p_out", "p_mppt", "vsm_limit"):
        y = np.where(np.isfinite(der[col][sel]), der[col][sel], np.nan)
        ax.plot(der["t_s"][sel], y, label=col)
    ax.set_title(first)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("MW")
    ax.legend()
    fig.tight_layout()
    made.append(out / "der.png")
    fig.savefig(made[-1], dpi=120)
    plt.close(fig)

    env = read_series(out / "voltage_envelope.csv")
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name in dict.fromkeys(env["feeder"]):
        m = env["feeder"] == name
        t, mu, sd = env["t_s"][m], env["mean"][m], env["std"][m]
        line, = ax.plot(t, mu, label=name)
        ax.fill_between(t, mu - sd, mu + sd, alpha=0.3, color=line.get_color())
        ax.plot(t, env["min"][m], ":", color=line.get_color())
        ax.plot(t, env["max"][m], ":", color=line.get_color())
    ax.set_xlabel("time (s)")
    ax.set_ylabel("voltage (pu)")
    ax.legend()
    fig.tight_layout()
    made.append(out / "voltage_envelope.png")
    fig.savefig(made[-1], dpi=120)
    plt.close(fig)
    return made
