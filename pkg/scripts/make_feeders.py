"""Generate the shipped feeder files under src/tdfreq/data/feeders/.

    python scripts/make_feeders.py [--check]

The 34-node feeder keeps the IEEE 34-bus topology and phasing with shortened
sections and scaled loads (no regulators); the 300-node feeder is a seeded
random radial tree standing in for the large feeder.
"""
import argparse
from pathlib import Path

import numpy as np
import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "feeders"

FT_TO_KM = 0.0003048


def linecode(zs, zm, ampacity):
    z = np.full((3, 3), zm, dtype=complex)
    np.fill_diagonal(z, zs)
    return {
        "r": [[round(float(v.real), 6) for v in row] for row in z],
        "x": [[round(float(v.imag), 6) for v in row] for row in z],
        "ampacity": ampacity,
    }


CODES = {
    "trunk": linecode(0.19 + 0.39j, 0.059 + 0.18j, 530.0),
    "lateral3": linecode(0.36 + 0.47j, 0.06 + 0.19j, 300.0),
    "single": linecode(0.60 + 0.50j, 0.0, 200.0),
}


def six_node():
    branches = [
        ("sub", "n1", 8.0), ("n1", "n2", 8.0), ("n2", "n3", 6.0), ("n3", "n4", 6.0), ("n2", "n5", 10.0),
    ]
    return {
        "name": "six_node",
        "v_base_kv": 12.47,
        "source": "sub",
        "linecodes": {"lateral3": CODES["lateral3"]},
        "branches": [
            {"name": f"l{i}", "from": a, "to": b, "linecode": "lateral3", "length_km": ln, "phases": "abc"}
            for i, (a, b, ln) in enumerate(branches, 1)
        ],
        "loads": [
            {"node": "n1", "kw": 40.0, "kvar": 15.0},
            {"node": "n3", "kw": 30.0, "kvar": 10.0},
            {"node": "n4", "kw": 25.0, "kvar": 10.0},
            {"node": "n5", "kw": 30.0, "kvar": 10.0},
        ],
        "ders": [
            {"id": "der1", "node": "n4", "phases": "abc", "rating_mw": 0.9},
            {"id": "der2", "node": "n5", "phases": "abc", "rating_mw": 0.9},
        ],
    }


# IEEE 34-bus sections: from, to, length ft, phases
IEEE34_SECTIONS = [
    ("800", "802", 2580, "abc"), ("802", "806", 1730, "abc"), ("806", "808", 32230, "abc"),
    ("808", "810", 5804, "b"), ("808", "812", 37500, "abc"), ("812", "814", 29730, "abc"),
    ("814", "850", 10, "abc"), ("850", "816", 310, "abc"), ("816", "818", 1710, "a"),
    ("818", "820", 48150, "a"), ("820", "822", 13740, "a"), ("816", "824", 10210, "abc"),
    ("824", "826", 3030, "b"), ("824", "828", 840, "abc"), ("828", "830", 20440, "abc"),
    ("830", "854", 520, "abc"), ("854", "856", 23330, "b"), ("854", "852", 36830, "abc"),
    ("852", "832", 10, "abc"), ("832", "888", 10, "abc"), ("888", "890", 10560, "abc"),
    ("832", "858", 4900, "abc"), ("858", "864", 1620, "a"), ("858", "834", 5830, "abc"),
    ("834", "842", 280, "abc"), ("842", "844", 1350, "abc"), ("844", "846", 3640, "abc"),
    ("846", "848", 530, "abc"), ("834", "860", 2020, "abc"), ("860", "836", 2680, "abc"),
    ("836", "840", 860, "abc"), ("836", "862", 280, "abc"), ("862", "838", 4860, "b"),
]
TRUNK34 = {"800", "802", "806", "808", "812", "814", "850", "816", "824", "828", "830", "854", "852", "832"}

# spot + distributed loads lumped at the receiving node, kW per phase (a, b, c)
IEEE34_LOADS = {
    "806": (0, 30, 25), "810": (0, 16, 0), "820": (34, 0, 0), "822": (135, 0, 0),
    "824": (0, 5, 0), "826": (0, 40, 0), "828": (0, 0, 4), "830": (17, 10, 25),
    "856": (0, 4, 0), "858": (7, 2, 6), "864": (2, 0, 0), "834": (4, 15, 13),
    "860": (36, 40, 130), "836": (30, 10, 42), "840": (27, 31, 9), "838": (0, 28, 0),
    "844": (144, 135, 135), "846": (0, 25, 20), "848": (20, 43, 20), "890": (150, 150, 150),
}
DER34_NODES = ["830", "852", "832", "858", "834", "842", "844", "846", "860", "836"]


def ieee34_like(length_scale=0.3, load_scale=3.5):
    branches = []
    for i, (a, b, ft, ph) in enumerate(IEEE34_SECTIONS, 1):
        code = "single" if len(ph) == 1 else ("trunk" if a in TRUNK34 and b in TRUNK34 else "lateral3")
        branches.append({
            "name": f"s{a}_{b}", "from": a, "to": b, "linecode": code,
            "length_km": round(max(ft, 10) * FT_TO_KM * length_scale, 5), "phases": ph,
        })
    loads = [
        {"node": n, "kw": [round(k * load_scale, 3) for k in kw], "kvar": [round(k * load_scale * 0.48, 3) for k in kw]}
        for n, kw in IEEE34_LOADS.items()
    ]
    ders = [{"id": f"der{i}", "node": n, "phases": "abc", "rating_mw": 0.9} for i, n in enumerate(DER34_NODES, 1)]
    return {
        "name": "ieee34_like", "v_base_kv": 24.9, "source": "800",
        "linecodes": CODES, "branches": branches, "loads": loads, "ders": ders,
    }


def synthetic_tree(n_nodes=300, trunk=40, seed=8500, target_mw=7.5):
    rng = np.random.default_rng(seed)
    names = [f"n{k:03d}" for k in range(n_nodes)]
    phases = {names[0]: "abc"}
    depth = {names[0]: 0}
    branches = []
    for k in range(1, trunk):
        branches.append({"from": names[k - 1], "to": names[k], "linecode": "trunk", "length_km": 0.12, "phases": "abc"})
        phases[names[k]] = "abc"
        depth[names[k]] = k
    for k in range(trunk, n_nodes):
        parent = names[int(rng.integers(1, k))]
        if phases[parent] == "abc" and rng.random() < 0.65:
            ph, code = "abc", "lateral3"
        else:
            ph = phases[parent] if len(phases[parent]) == 1 else "abc"[int(rng.integers(0, 3))]
            code = "single"
        length = float(np.round(rng.uniform(0.04, 0.15), 4))
        branches.append({"from": parent, "to": names[k], "linecode": code, "length_km": length, "phases": ph})
        phases[names[k]] = ph
    for i, br in enumerate(branches, 1):
        br["name"] = f"b{i:03d}"

    raw = {}
    for n in names[1:]:
        if rng.random() < 0.7:
            kw = np.zeros(3)
            for p in phases[n]:
                kw["abc".index(p)] = rng.uniform(10, 40) if len(phases[n]) == 3 else rng.uniform(15, 50)
            raw[n] = kw
    total = sum(v.sum() for v in raw.values())
    scale = target_mw * 1e3 / total
    loads = [
        {"node": n, "kw": [round(float(x * scale), 3) for x in kw], "kvar": [round(float(x * scale * 0.45), 3) for x in kw]}
        for n, kw in raw.items()
    ]
    three = [n for n in names[5:] if phases[n] == "abc"]
    picks = sorted(rng.choice(len(three), size=10, replace=False))
    ders = [{"id": f"der{i}", "node": three[j], "phases": "abc", "rating_mw": 0.9} for i, j in enumerate(picks, 1)]
    return {
        "name": "synthetic300", "v_base_kv": 12.47, "source": names[0],
        "linecodes": CODES, "branches": branches, "loads": loads, "ders": ders,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true", help="solve each feeder and print voltage range")
    args = parser.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    feeders = {"six_node": six_node(), "ieee34_like": ieee34_like(), "synthetic300": synthetic_tree()}
    for name, data in feeders.items():
        with open(OUT / f"{name}.yaml", "w") as fh:
            yaml.safe_dump(data, fh, sort_keys=False, default_flow_style=None, width=120)
    if args.check:
        from tdfreq.distribution import FeederNetwork, boundary_power_mva, check_limits, solve_feeder

        for name in feeders:
            f = FeederNetwork.from_yaml(OUT / f"{name}.yaml")
            for p in (0.0, 0.5, 0.8):
                sol = solve_feeder(f, 1.0, {d.id: p for d in f.ders})
                mean, std, lo, hi = sol.voltage_stats()
                print(f"{name:14s} nodes={len(f.nodes):3d} der={p:.1f} V=[{lo:.4f},{hi:.4f}] "
                      f"S={boundary_power_mva(sol):.3f} it={sol.iterations} viol={len(check_limits(sol, f))}")


if __name__ == "__main__":
    main()
