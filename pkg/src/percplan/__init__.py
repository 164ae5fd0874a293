"""Perception-aware motion planning with Monte Carlo localization checks.

Pipeline: `roadmap.build_graph` samples an r-disc roadmap,
`heuristic.profiles_for_roadmap` scores every edge for expected drift,
`explore.explore` finds the cheapest goal plan whose drift heuristic stays
within a bound, and `montecarlo.mc_verify` / `montecarlo.refine_bound`
certify the plan by closed-loop simulation.
"""

from .environment import Box, Environment, GoalRegion, Obstacle, PlannerState, VisibilityParams, Workspace
from .errors import (InfeasibleSpace, NoFeasiblePlan, NoGoalSample, NonConvergence, ParseError,
                     PlanningError, ScenarioError, ValidationError)
from .explore import ExploreParams, Plan, explore, search
from .heuristic import EdgeProfile, HeuristicMap, HeuristicParams, fold_heuristic, profiles_for_roadmap
from .montecarlo import (NoiseModel, TrackerGains, VehicleModel, VerifyParams, lqr_gain, mc_verify,
                         refine_bound, simulate_trial)
from .roadmap import Roadmap, build_graph
from .scenario import Scenario, load_scenario, write_scenario

__version__ = "0.1.0"
