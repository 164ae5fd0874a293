"""Batch front end: ``plan <scenario.json> [--mode ...] [--workers N] [--out DIR]``.

Runs the four pipeline phases (graph build, heuristic profiles, exploration,
Monte Carlo) and writes into ``--out``:

``solution.json``
    ``{"nodes": [...], "states": [{"node", "position", "yaw"}], "cost", "h", "beta"}``
``pareto.json``
    ``{"goal_fronts": [{"node": v, "front": [[cost, h], ...]}]}``, the
    surviving labels at every goal node when the final search stopped.
``trials.csv``
    ``trial,max_loc_error,max_deviation`` (verify and refine modes).
``summary.json``
    status, cost, h, beta, p_hat and its standard error, pass flag and
    wall-clock seconds per phase.

Exit status: 0 feasible (and certified when Monte Carlo runs), 1 bad
scenario file, 2 no feasible plan, 3 Monte Carlo failure in verify mode,
4 Riccati non-convergence. Heuristic-map files are described in
`percplan.scenario`.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

from .errors import NoFeasiblePlan, NonConvergence, PlanningError, ScenarioError
from .explore import ExploreParams, search
from .heuristic import HeuristicMap, profiles_for_roadmap
from .montecarlo import lqr_gain, mc_verify, refine_bound
from .roadmap import build_graph
from .scenario import Scenario, load_scenario, with_mode

EXIT_OK, EXIT_SCENARIO, EXIT_NO_PLAN, EXIT_MC_FAIL, EXIT_NUMERIC = 0, 1, 2, 3, 4
ARTIFACTS = ("solution.json", "pareto.json", "trials.csv", "summary.json")
_MODE_FLAGS = {"explore": "explore-only", "verify": "verify", "refine": "refine"}


def _num(x):
    return None if x is None or math.isinf(x) else x


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def solution_dict(plan, roadmap, beta) -> dict:
    states = [{"node": v, "position": list(roadmap.nodes[v].position), "yaw": roadmap.nodes[v].yaw}
              for v in plan.nodes]
    return {"nodes": list(plan.nodes), "states": states, "cost": plan.cost, "h": plan.h, "beta": _num(beta)}


def pareto_dict(result, roadmap) -> dict:
    fronts = result.fronts(roadmap.goal_nodes)
    return {"goal_fronts": [{"node": v, "front": [list(ch) for ch in fronts[v]]} for v in sorted(fronts)]}


def write_trials(path: Path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "max_loc_error", "max_deviation"])
        for i, r in enumerate(results):
            w.writerow([i, repr(r.max_loc_error), repr(r.max_deviation)])


class Pipeline:
    """Scenario-bound phases; graph and profiles are computed once and reused."""

    def __init__(self, scenario: Scenario, workers: int = 1):
        self.s = scenario
        self.workers = workers
        self.env = scenario.environment()
        self.vp = scenario.visibility()
        self.hp = scenario.heuristic_params()
        self.timings = {"graph_build": 0.0, "heuristic": 0.0, "exploration": 0.0, "monte_carlo": 0.0}
        self.roadmap = None
        self.profiles = None
        self.searches = {}

    def prepare(self):
        t = time.perf_counter()
        p = self.s.planner
        self.roadmap = build_graph(self.env, p.n, p.r_n, self.s.x_init, self.s.goal, workers=self.workers)
        self.timings["graph_build"] += time.perf_counter() - t
        t = time.perf_counter()
        hmap = None
        if self.s.heuristic.source == "heuristic-map":
            hmap = HeuristicMap.load(self.s.heuristic_map_path(), self.s.heuristic.k_nn, self.s.heuristic.w_yaw)
        self.profiles = profiles_for_roadmap(self.roadmap, self.env, self.vp, self.hp, hmap, workers=self.workers)
        self.timings["heuristic"] += time.perf_counter() - t
        return self

    def search(self, beta: float):
        t = time.perf_counter()
        result = search(self.roadmap, self.profiles, ExploreParams(self.s.planner.epsilon, beta),
                        workers=self.workers)
        self.timings["exploration"] += time.perf_counter() - t
        self.searches[beta] = result
        return result

    def plan(self, beta: float):
        result = self.search(beta)
        if result.plan is None:
            raise NoFeasiblePlan(f"no goal plan with h <= {beta}")
        return result.plan

    def verify(self, plan):
        t = time.perf_counter()
        gains = lqr_gain(self.s.mc.Q, self.s.mc.R)
        v = mc_verify(plan, self.roadmap, self.env, self.vp, self.s.noise(), gains, self.s.verify_params(),
                      nominal_speed=self.hp.nominal_speed, vehicle=self.s.vehicle(), workers=self.workers)
        self.timings["monte_carlo"] += time.perf_counter() - t
        return v


def run(scenario: Scenario, out, *, workers: int = 1, mode: str | None = None) -> int:
    """Execute the scenario, write artifacts into `out` and return the exit status."""
    if mode is not None:
        scenario = with_mode(scenario, mode)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ARTIFACTS:
        (out / name).unlink(missing_ok=True)

    pipe = Pipeline(scenario, workers)
    summary = {"mode": scenario.mode, "status": "ok", "cost": None, "h": None, "beta": None,
               "p_hat": None, "p_hat_stderr": None, "pass": None, "timings": pipe.timings}
    verification = None
    try:
        pipe.prepare()
        if scenario.mode == "refine":
            ref = refine_bound(pipe.plan, pipe.verify, scenario.planner.beta_max, scenario.planner.max_iters)
            plan, beta, verification = ref.plan, ref.beta, ref.verification
            summary["refine"] = {"iterations": ref.iterations,
                                 "history": [{"beta": b, "cost": c, "pass": ok} for b, c, ok in ref.history]}
        else:
            beta = scenario.planner.beta
            plan = pipe.plan(beta)
            if scenario.mode == "verify":
                verification = pipe.verify(plan)
    except NoFeasiblePlan as exc:
        summary.update(status="no-feasible-plan", message=str(exc))
        _dump(out / "summary.json", summary)
        return EXIT_NO_PLAN
    except NonConvergence as exc:
        summary.update(status="non-convergence", message=str(exc))
        _dump(out / "summary.json", summary)
        return EXIT_NUMERIC
    except PlanningError as exc:
        summary.update(status=type(exc).__name__, message=str(exc))
        _dump(out / "summary.json", summary)
        return EXIT_NO_PLAN

    _dump(out / "solution.json", solution_dict(plan, pipe.roadmap, beta))
    _dump(out / "pareto.json", pareto_dict(pipe.searches[beta], pipe.roadmap))
    summary.update(cost=plan.cost, h=plan.h, beta=_num(beta))
    status = EXIT_OK
    if verification is not None:
        write_trials(out / "trials.csv", verification.results)
        summary.update({"p_hat": verification.p_hat, "p_hat_stderr": verification.stderr,
                        "pass": verification.passed})
        if not verification.passed:
            summary["status"] = "mc-fail"
            status = EXIT_MC_FAIL
    _dump(out / "summary.json", summary)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="plan", description="Perception-aware planning with Monte Carlo certification.")
    ap.add_argument("scenario", help="scenario JSON file")
    ap.add_argument("--mode", choices=sorted(_MODE_FLAGS), help="override the scenario's mode")
    ap.add_argument("--workers", type=int, default=1, help="worker threads for the parallel phases")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    args = ap.parse_args(argv)
    if args.workers < 1:
        ap.error("--workers must be >= 1")
    try:
        scenario = load_scenario(args.scenario)
        code = run(scenario, args.out, workers=args.workers,
                   mode=_MODE_FLAGS[args.mode] if args.mode else None)
    except (ScenarioError, OSError) as exc:
        print(f"plan: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    print(f"plan: status={summary['status']} cost={summary['cost']} h={summary['h']} "
          f"p_hat={summary['p_hat']} -> {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
