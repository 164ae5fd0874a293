"""Regenerate the shipped scenario files in scenarios/.

two_corridor*   A block splits the map into a short northern corridor with
                no landmarks and a longer southern corridor lined with them.
imu_only        No landmarks and a single-step plan, used to calibrate the
                Monte Carlo exceedance estimate against a chi-square tail.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

from percplan.environment import Box, PlannerState, visible_counts
from percplan.roadmap import halton
from percplan.scenario import HeuristicSource, MCConfig, PlannerConfig, Scenario, write_scenario

ROOT = Path(__file__).resolve().parents[1] / "scenarios"


def wall(x0, y0, x1, y1, spacing=0.4, zs=(0.5, 1.5)):
    n = int(round(math.hypot(x1 - x0, y1 - y0) / spacing))
    return [(x0 + k / n * (x1 - x0), y0 + k / n * (y1 - y0), z) for k in range(n + 1) for z in zs]


def corridor_features():
    # West and east end walls, the southern outer wall, and the three block
    # faces that bound the southern corridor. The northern corridor is bare.
    # The two walls lining the southern corridor get a third row so that a
    # camera facing along it sees at least n_f landmarks everywhere.
    rows = (0.5, 1.0, 1.5)
    return (wall(0.05, 0.05, 0.05, 8) + wall(2.95, 2, 2.95, 6) + wall(0.05, 0.05, 14, 0.05, zs=rows)
            + wall(3, 1.95, 11, 1.95, zs=rows) + wall(13.95, 0.05, 13.95, 8) + wall(11.05, 2, 11.05, 6))


def two_corridor(mode="explore-only", beta=math.inf, beta_max=None, trials=1000, seed=1,
                 heuristic=None) -> Scenario:
    planner = PlannerConfig(n=600, r_n=1.5, epsilon=0.5, beta=beta, beta_max=beta_max, max_iters=8,
                            n_f=12, dt=0.2, nominal_speed=1.0, fov_half_angle=math.pi / 4, max_range=3.5)
    mc = MCConfig(trials=trials, delta_xhat=0.25, alpha=0.05, sigma_imu=0.3, sigma_vis=0.05,
                  dt_sim=0.05, rng_seed=seed)
    return Scenario(
        workspace=Box((0, 0, 0), (14, 8, 2)),
        x_init=PlannerState((1.5, 7.0, 1.0), -math.pi / 2),
        goal=Box((12.5, 6, 0), (14, 8, 2)),
        obstacles=(Box((3, 2, 0), (11, 6, 2)),),
        features=tuple(tuple(round(c, 6) for c in f) for f in corridor_features()),
        mode=mode, planner=planner, mc=mc, heuristic=heuristic or HeuristicSource(),
    )


def heuristic_map_records(s: Scenario, count=400):
    """Rates sampled from the feature-count drift model at Halton states."""
    env, vp = s.environment(), s.visibility()
    lo, hi = np.array(s.workspace.lo), np.array(s.workspace.hi)
    pos, yaw = [], []
    k = 1
    while len(pos) < count:
        u = np.array([halton(k, b) for b in (2, 3, 5, 7)])
        k += 1
        p = lo + u[:3] * (hi - lo)
        if env.obstacles and any(b.contains(p) for b in env.obstacles):
            continue
        pos.append(p)
        yaw.append(-math.pi + 2 * math.pi * u[3])
    pos, yaw = np.array(pos), np.array(yaw)
    counts = visible_counts(pos, yaw, env, vp)
    rates = 1.0 - counts / s.planner.n_f
    vel = s.planner.nominal_speed * np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=1)
    return [{"position": [round(c, 6) for c in p], "velocity": [round(c, 6) for c in v],
             "yaw": round(float(y), 6), "rate": float(r)} for p, v, y, r in zip(pos, vel, yaw, rates)]


def imu_only() -> Scenario:
    # The goal sits 0.04 m away, so the nominal trajectory is one 0.05 s step.
    planner = PlannerConfig(n=20, r_n=0.5, beta=math.inf, dt=0.05, nominal_speed=1.0)
    mc = MCConfig(trials=10000, delta_xhat=0.004, alpha=0.5, sigma_imu=1.0, sigma_vis=0.0,
                  dt_sim=0.05, rng_seed=7)
    return Scenario(
        workspace=Box((0, 0, 0), (2, 2, 2)),
        x_init=PlannerState((1.0, 1.0, 1.0), 0.0),
        goal=Box((1.035, 0.995, 0.995), (1.045, 1.005, 1.005)),
        mode="verify", planner=planner, mc=mc,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    write_scenario(two_corridor(), args.out / "two_corridor.json")
    write_scenario(two_corridor("verify", beta=0.5), args.out / "two_corridor_aware.json")
    write_scenario(two_corridor("refine", beta_max=12.0, trials=500), args.out / "two_corridor_noisy.json")
    map_source = HeuristicSource("heuristic-map", "two_corridor_map_records.json", k_nn=8, w_yaw=1.0)
    mapped = two_corridor(beta=1.0, heuristic=map_source)
    (args.out / map_source.path).write_text(json.dumps(heuristic_map_records(mapped), indent=1) + "\n")
    write_scenario(mapped, args.out / "two_corridor_map.json")
    write_scenario(imu_only(), args.out / "imu_only.json")
    for p in sorted(args.out.glob("*.json")):
        print(p)


if __name__ == "__main__":
    main()
