"""Localization error and tracking deviation for plans planned at several bounds.

Plans the two-corridor scenario at each beta, verifies each plan with the
scenario's Monte Carlo settings and prints one row of error statistics per
plan. Tight bounds should move the route into the landmark corridor and pull
in the whole error distribution, the tail most of all.
"""

from __future__ import annotations

import argparse
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from percplan.cli import Pipeline
from percplan.errors import NoFeasiblePlan
from percplan.scenario import load_scenario

SCEN = Path(__file__).resolve().parents[1] / "scenarios"


def stats(x):
    return x.mean(), x.var(), np.percentile(x, 50), np.percentile(x, 99), x.max()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", type=Path, default=SCEN / "two_corridor_aware.json")
    ap.add_argument("--betas", type=float, nargs="+", default=[math.inf, 12.0, 8.0, 4.0, 1.0, 0.5])
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    s = load_scenario(args.scenario)
    if args.trials:
        s = replace(s, mc=replace(s.mc, trials=args.trials))
    pipe = Pipeline(s, args.workers).prepare()
    print(f"{s.mc.trials} trials per plan, delta_xhat={s.mc.delta_xhat}")
    head = f"{'beta':>6} {'cost':>7} {'h':>7} {'p_hat':>6} | " + "  ".join(
        f"{k:>7}" for k in ("mean", "var", "p50", "p99", "max"))
    print(head + "   (localization error, then deviation)")
    for beta in args.betas:
        try:
            plan = pipe.plan(beta)
        except NoFeasiblePlan:
            print(f"{beta:>6} no feasible plan")
            continue
        v = pipe.verify(plan)
        for label, x in (("err", v.loc_errors), ("dev", v.deviations)):
            lead = f"{beta:>6} {plan.cost:7.2f} {plan.h:7.2f} {v.p_hat:6.3f}" if label == "err" else " " * 30
            print(f"{lead} | " + "  ".join(f"{val:7.4f}" for val in stats(x)) + f"  {label}")


if __name__ == "__main__":
    main()
