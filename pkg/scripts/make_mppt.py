"""Generate the shipped PV available-power series under src/tdfreq/data/series/.

    python scripts/make_mppt.py

Each file holds 1 s samples from 0 to 600 s (header t_seconds,mw): a slow
random walk around 0.8 MW, smoothed and bounded to [0.7, 0.88] MW.
"""
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "series"


def mppt_series(seed: int, n: int = 601, mean: float = 0.8) -> np.ndarray:
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.normal(0.0, 0.004, n))
    walk -= np.linspace(0.0, walk[-1], n)  # no net drift over the window
    kernel = np.ones(15) / 15
    smooth = np.convolve(np.pad(walk, 7, mode="edge"), kernel, mode="valid")
    return np.clip(mean + smooth, 0.7, 0.88)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate("abc"):
        values = mppt_series(100 + k)
        path = OUT / f"mppt_{name}.csv"
        with open(path, "w") as fh:
            fh.write("t_seconds,mw\n")
            for t, v in enumerate(values):
                fh.write(f"{t},{v:.6f}\n")
        print(f"{path.name}: min {values.min():.3f} max {values.max():.3f}")


if __name__ == "__main__":
    main()
