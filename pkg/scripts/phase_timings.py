"""Wall-clock time of each planning phase against roadmap size and worker count."""

from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from percplan.cli import Pipeline
from percplan.scenario import load_scenario

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", type=Path, default=SCEN / "two_corridor_aware.json")
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 600, 1200])
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()

    base = load_scenario(args.scenario)
    print(f"{'n':>6} {'workers':>7} {'edges':>7} {'graph':>7} {'heur':>7} {'explore':>8} {'mc':>7} {'total':>7}")
    for n in args.sizes:
        s = replace(base, planner=replace(base.planner, n=n), mc=replace(base.mc, trials=args.trials))
        for w in args.workers:
            t = time.perf_counter()
            pipe = Pipeline(s, w).prepare()
            pipe.verify(pipe.plan(s.planner.beta))
            total = time.perf_counter() - t
            tm = pipe.timings
            edges = sum(1 for _ in pipe.roadmap.edges())
            print(f"{n:>6} {w:>7} {edges:>7} {tm['graph_build']:7.2f} {tm['heuristic']:7.2f} "
                  f"{tm['exploration']:8.2f} {tm['monte_carlo']:7.2f} {total:7.2f}")


if __name__ == "__main__":
    main()
