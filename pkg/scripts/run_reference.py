"""Run every shipped scenario and write results under results/<name>/.

    python scripts/run_reference.py [--out results] [--plot] [names ...]
"""
import argparse
from pathlib import Path

from tdfreq.outputs import emit_outputs, plot_results
from tdfreq.scenario import load_scenario, run

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "scenarios"


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("names", nargs="*", help="scenario names (default: all shipped)")
    parser.add_argument("--out", default="results")
    parser.add_argument("--plot", action="store_true", help="also render PNGs")
    args = parser.parse_args()
    names = args.names or sorted(p.stem for p in SCENARIOS.glob("*.yaml"))
    print(f"{'scenario':<18} {'wall s':>7} {'f mean':>10} {'f std':>8} {'f min':>10} {'f(end)':>10}")
    for name in names:
        res = run(load_scenario(SCENARIOS / f"{name}.yaml"))
        out = Path(args.out) / name
        emit_outputs(res, out)
        if args.plot:
            plot_results(out)
        f = res.summary["freq_hz"]
        print(f"{name:<18} {res.wall_clock:7.2f} {f['mean']:10.5f} {f['std']:8.5f} {f['min']:10.5f} {res.freq[-1]:10.5f}")


if __name__ == "__main__":
    main()
