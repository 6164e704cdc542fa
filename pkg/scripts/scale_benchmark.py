"""Wall-clock comparison of the two-feeder reference run and the ten-feeder run.

    python scripts/scale_benchmark.py [--repeat 3] [--workers 1]
"""
import argparse
import statistics
from dataclasses import replace
from pathlib import Path

from tdfreq.scenario import load_scenario, run

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "tdfreq" / "data" / "scenarios"


def timed(name, repeat, workers):
    sc = load_scenario(SCENARIOS / f"{name}.yaml")
    sc = replace(sc, federation=replace(sc.federation, workers=workers))
    return [run(sc).wall_clock for _ in range(repeat)]


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--workers", type=int, default=1, help="threads for feeder federates")
    args = parser.parse_args()
    ref = timed("load_noise_agc", args.repeat, args.workers)
    big = timed("scale10", args.repeat, args.workers)
    r, b = statistics.median(ref), statistics.median(big)
    print(f"2 feeders (34 + 300 nodes): median {r:.2f} s over {args.repeat}")
    print(f"10 feeders (34 nodes each): median {b:.2f} s over {args.repeat}")
    print(f"ratio {b / r:.2f}")


if __name__ == "__main__":
    main()
