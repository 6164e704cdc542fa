"""Generate the shipped transmission grids under src/tdfreq/data/grids/.

    python scripts/make_grids.py [--check]

ieee14_td: IEEE 14-bus branch data with five classical machines. Bus loads are
totals; a scenario attaching a feeder to a bus subtracts the feeder's demand.
ieee14_scale: the same grid with enough load on ten buses to host ten feeders.
wscc9: the three-machine nine-bus system with machine data on machine bases.
"""
import argparse
from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "grids"


def gov(mva, p_max=None):
    return {"r": 0.05, "tg": 0.5, "p_max": float(p_max if p_max is not None else mva), "p_min": 0.0}


def wscc9():
    buses = [
        {"id": 1, "type": "slack", "v": 1.04}, {"id": 2, "type": "pv", "v": 1.025}, {"id": 3, "type": "pv", "v": 1.025},
        {"id": 4}, {"id": 5, "p_load": 125.0, "q_load": 50.0}, {"id": 6, "p_load": 90.0, "q_load": 30.0},
        {"id": 7}, {"id": 8, "p_load": 100.0, "q_load": 35.0}, {"id": 9},
    ]
    lines = [
        (1, 4, 0.0, 0.0576, 0.0), (4, 5, 0.010, 0.085, 0.176), (5, 7, 0.032, 0.161, 0.306),
        (7, 2, 0.0, 0.0625, 0.0), (7, 8, 0.0085, 0.072, 0.149), (8, 9, 0.0119, 0.1008, 0.209),
        (9, 3, 0.0, 0.0586, 0.0), (9, 6, 0.039, 0.170, 0.358), (6, 4, 0.017, 0.092, 0.158),
    ]
    gens = [
        {"id": "G1", "bus": 1, "p_mw": 71.6, "mva": 247.5, "h": 9.55, "d": 1.0, "xd_prime": 0.1505, "governor": gov(247.5)},
        {"id": "G2", "bus": 2, "p_mw": 163.0, "mva": 192.0, "h": 3.33, "d": 1.0, "xd_prime": 0.23, "governor": gov(192.0)},
        {"id": "G3", "bus": 3, "p_mw": 85.0, "mva": 128.0, "h": 2.35, "d": 1.0, "xd_prime": 0.232, "governor": gov(128.0)},
    ]
    return {
        "name": "wscc9", "base_mva": 100.0, "load_model": "Z", "buses": buses,
        "lines": [{"from": a, "to": b, "r": r, "x": x, "b": bb} for a, b, r, x, bb in lines],
        "generators": gens,
    }


IEEE14_LOADS = {
    2: (21.7, 12.7), 3: (94.2, 19.0), 4: (47.8, -3.9), 5: (7.6, 1.6), 6: (11.2, 7.5), 9: (29.5, 16.6),
    10: (9.0, 5.8), 11: (3.5, 1.8), 12: (6.1, 1.6), 13: (13.5, 5.8), 14: (14.9, 5.0),
}
IEEE14_LINES = [
    (1, 2, 0.01938, 0.05917, 0.0528, 1.0), (1, 5, 0.05403, 0.22304, 0.0492, 1.0),
    (2, 3, 0.04699, 0.19797, 0.0438, 1.0), (2, 4, 0.05811, 0.17632, 0.034, 1.0),
    (2, 5, 0.05695, 0.17388, 0.0346, 1.0), (3, 4, 0.06701, 0.17103, 0.0128, 1.0),
    (4, 5, 0.01335, 0.04211, 0.0, 1.0), (4, 7, 0.0, 0.20912, 0.0, 0.978),
    (4, 9, 0.0, 0.55618, 0.0, 0.969), (5, 6, 0.0, 0.25202, 0.0, 0.932),
    (6, 11, 0.09498, 0.1989, 0.0, 1.0), (6, 12, 0.12291, 0.25581, 0.0, 1.0),
    (6, 13, 0.06615, 0.13027, 0.0, 1.0), (7, 8, 0.0, 0.17615, 0.0, 1.0),
    (7, 9, 0.0, 0.11001, 0.0, 1.0), (9, 10, 0.03181, 0.0845, 0.0, 1.0),
    (9, 14, 0.12711, 0.27038, 0.0, 1.0), (10, 11, 0.08205, 0.19207, 0.0, 1.0),
    (12, 13, 0.22092, 0.19988, 0.0, 1.0), (13, 14, 0.17093, 0.34802, 0.0, 1.0),
]
# buses hosting a 34-node feeder in the scale grid, with a floor on their total load
SCALE_BUSES = (2, 3, 4, 5, 9, 10, 11, 12, 13, 14)
SCALE_FLOOR = (8.0, 3.5)


def ieee14_td(scale=False):
    vset = {1: 1.02, 2: 1.02, 3: 1.01, 6: 1.03, 8: 1.03}
    buses = []
    for b in range(1, 15):
        p, q = IEEE14_LOADS.get(b, (0.0, 0.0))
        if scale and b in SCALE_BUSES:
            p, q = max(p, SCALE_FLOOR[0]), max(q, SCALE_FLOOR[1])
        entry = {"id": b, "type": "slack" if b == 1 else ("pv" if b in vset else "pq")}
        if b in vset:
            entry["v"] = vset[b]
        entry.update({"p_load": round(p, 4), "q_load": round(q, 4)})
        if b == 9:
            entry["bs"] = 19.0
        buses.append(entry)
    gens = [
        {"id": "G1", "bus": 1, "p_mw": 120.0, "mva": 300.0, "h": 5.0, "d": 1.0, "xd_prime": 0.3, "governor": gov(300.0)},
        {"id": "G2", "bus": 2, "p_mw": 40.0, "mva": 100.0, "h": 4.5, "d": 1.0, "xd_prime": 0.25, "governor": gov(100.0, 80.0)},
        {"id": "G3", "bus": 3, "p_mw": 40.0, "mva": 100.0, "h": 4.5, "d": 1.0, "xd_prime": 0.25, "governor": gov(100.0, 80.0)},
        {"id": "G4", "bus": 6, "p_mw": 40.0, "mva": 100.0, "h": 4.0, "d": 1.0, "xd_prime": 0.25, "governor": gov(100.0, 80.0)},
        {"id": "G5", "bus": 8, "p_mw": 25.0, "mva": 100.0, "h": 4.0, "d": 1.0, "xd_prime": 0.25, "governor": gov(100.0, 80.0)},
    ]
    return {
        "name": "ieee14_scale" if scale else "ieee14_td", "base_mva": 100.0, "load_model": "Z", "buses": buses,
        "lines": [{"from": a, "to": b, "r": r, "x": x, "b": bb, "tap": t} for a, b, r, x, bb, t in IEEE14_LINES],
        "generators": gens,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true", help="solve the power flow of each grid")
    args = parser.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    grids = {"wscc9": wscc9(), "ieee14_td": ieee14_td(), "ieee14_scale": ieee14_td(scale=True)}
    for name, data in grids.items():
        with open(OUT / f"{name}.yaml", "w") as fh:
            yaml.safe_dump(data, fh, sort_keys=False, default_flow_style=None, width=120)
    if args.check:
        import numpy as np

        from tdfreq.transmission import Grid, solve_power_flow

        for name in grids:
            grid = Grid.from_yaml(OUT / f"{name}.yaml")
            pf = solve_power_flow(grid)
            print(name, "iter", pf.iterations, "Vmin %.4f Vmax %.4f" % (np.abs(pf.v).min(), np.abs(pf.v).max()))
            for g, s in pf.s_gen.items():
                print(f"  {g}: P={s.real * 100:.2f} MW Q={s.imag * 100:.2f} MVAr")


if __name__ == "__main__":
    main()
