"""Scenario files: JSON in, validated dataclasses out, and back.

Layout (unknown keys are rejected at every level)::

    {
      "workspace": {"lo": [x, y, z], "hi": [x, y, z]},
      "obstacles": [{"lo": [...], "hi": [...]}, ...],
      "features": [[x, y, z], ...],
      "x_init": {"position": [x, y, z], "yaw": 0.0},
      "goal": {"lo": [...], "hi": [...]},
      "mode": "explore-only" | "verify" | "refine",
      "planner": {"n": 600, "r_n": 1.5, "epsilon": 0.5, "beta": null,
                  "beta_max": null, "max_iters": 10, "n_f": 12, "dt": 0.1,
                  "nominal_speed": 1.0, "fov_half_angle": 0.785..,
                  "max_range": <workspace diagonal>},
      "mc": {"trials": 1000, "delta_xhat": d, "alpha": a,
             "sigma_imu": s, "sigma_vis": s, "dt_sim": <planner dt>,
             "rng_seed": 0, "u_max": [10, 10, 10],
             "Q": [[1, 0], [0, 1]], "R": 1.0},
      "heuristic": {"source": "feature-count"}
                 | {"source": "heuristic-map", "path": "map.json",
                    "k_nn": 8, "w_yaw": 1.0}
    }

``beta: null`` means no bound. The four mc fields without defaults are
required in verify and refine modes, and refine also needs a finite
``beta_max``. A heuristic-map path is resolved relative to
the scenario file; the map itself is a JSON array of
``{"position", "velocity", "yaw", "rate"}`` records (rate in heuristic units
per second).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .environment import Box, Environment, PlannerState, VisibilityParams
from .errors import ParseError, ValidationError
from .heuristic import HeuristicParams
from .montecarlo import NoiseModel, VehicleModel, VerifyParams

MODES = ("explore-only", "verify", "refine")
SOURCES = ("feature-count", "heuristic-map")


@dataclass(frozen=True)
class PlannerConfig:
    n: int = 600
    r_n: float = 1.5
    epsilon: float = 0.5
    beta: float = math.inf
    beta_max: float | None = None
    max_iters: int = 10
    n_f: int = 12
    dt: float = 0.1
    nominal_speed: float = 1.0
    fov_half_angle: float = math.pi / 4
    max_range: float | None = None


@dataclass(frozen=True)
class MCConfig:
    trials: int = 1000
    delta_xhat: float | None = None
    alpha: float | None = None
    sigma_imu: float | None = None
    sigma_vis: float | None = None
    dt_sim: float | None = None
    rng_seed: int = 0
    u_max: tuple[float, float, float] = (10.0, 10.0, 10.0)
    Q: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    R: float = 1.0


@dataclass(frozen=True)
class HeuristicSource:
    source: str = "feature-count"
    path: str | None = None
    k_nn: int = 8
    w_yaw: float = 1.0


@dataclass(frozen=True)
class Scenario:
    workspace: Box
    x_init: PlannerState
    goal: Box
    obstacles: tuple[Box, ...] = ()
    features: tuple[tuple[float, float, float], ...] = ()
    mode: str = "explore-only"
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    heuristic: HeuristicSource = field(default_factory=HeuristicSource)
    base_dir: str = field(default=".", compare=False)

    def environment(self) -> Environment:
        return Environment(self.workspace, list(self.obstacles), np.array(self.features, dtype=float).reshape(-1, 3))

    def visibility(self) -> VisibilityParams:
        max_range = self.planner.max_range
        if max_range is None:
            max_range = self.workspace.diagonal
        return VisibilityParams(self.planner.fov_half_angle, max_range)

    def heuristic_params(self) -> HeuristicParams:
        return HeuristicParams(self.planner.dt, self.planner.n_f, self.planner.nominal_speed)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.mc.sigma_imu or 0.0, self.mc.sigma_vis or 0.0)

    def vehicle(self) -> VehicleModel:
        dt_sim = self.planner.dt if self.mc.dt_sim is None else self.mc.dt_sim
        return VehicleModel(dt_sim, self.mc.u_max)

    def verify_params(self) -> VerifyParams:
        return VerifyParams(self.mc.trials, self.mc.delta_xhat, self.mc.alpha, self.mc.rng_seed)

    def heuristic_map_path(self) -> Path | None:
        if self.heuristic.path is None:
            return None
        return Path(self.base_dir) / self.heuristic.path


_TOP = {"workspace", "obstacles", "features", "x_init", "goal", "mode", "planner", "mc", "heuristic"}


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    """Typed field access that reports the offending field and its line."""

    def __init__(self, text: str):
        self.text = text

    def fail(self, msg, path):
        key = path.rsplit(".", 1)[-1].split("[", 1)[0]
        raise ParseError(msg, line=_line_of(self.text, key), field=path)

    def obj(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail("expected an object", path)
        for k in value:
            if k not in allowed:
                self.fail("unknown key", f"{path}.{k}" if path else k)
        return value

    def number(self, value, path, allow_none=False):
        if value is None and allow_none:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("expected a number", path)
        return float(value)

    def integer(self, value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail("expected an integer", path)
        return int(value)

    def vec3(self, value, path):
        if not isinstance(value, list) or len(value) != 3:
            self.fail("expected a list of 3 numbers", path)
        return tuple(self.number(v, f"{path}[{i}]") for i, v in enumerate(value))

    def string(self, value, path):
        if not isinstance(value, str):
            self.fail("expected a string", path)
        return value


def _box(r: _Reader, value, path, what) -> Box:
    d = r.obj(value, path, {"lo", "hi"})
    if "lo" not in d or "hi" not in d:
        r.fail("box needs lo and hi", path)
    lo, hi = r.vec3(d["lo"], f"{path}.lo"), r.vec3(d["hi"], f"{path}.hi")
    if not all(a < b for a, b in zip(lo, hi)):
        raise ValidationError(f"{what} bounds: lo must be < hi component-wise at {path}")
    return Box(lo, hi)


def parse_scenario(text: str, base_dir: str = ".") -> Scenario:
    """Parse and validate scenario JSON text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    r = _Reader(text)
    r.obj(raw, "", _TOP)
    for key in ("workspace", "x_init", "goal"):
        if key not in raw:
            r.fail("missing required key", key)

    workspace = _box(r, raw["workspace"], "workspace", "workspace")
    goal = _box(r, raw["goal"], "goal", "goal")
    if not isinstance(raw.get("obstacles", []), list):
        r.fail("expected a list", "obstacles")
    obstacles = tuple(_box(r, b, f"obstacles[{i}]", "obstacle") for i, b in enumerate(raw.get("obstacles", [])))
    if not isinstance(raw.get("features", []), list):
        r.fail("expected a list", "features")
    features = tuple(r.vec3(f, f"features[{i}]") for i, f in enumerate(raw.get("features", [])))

    xi = r.obj(raw["x_init"], "x_init", {"position", "yaw"})
    if "position" not in xi:
        r.fail("missing required key", "x_init.position")
    x_init = PlannerState(r.vec3(xi["position"], "x_init.position"), r.number(xi.get("yaw", 0.0), "x_init.yaw"))

    mode = r.string(raw.get("mode", "explore-only"), "mode")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")

    pl = r.obj(raw.get("planner", {}), "planner", {f.name for f in fields(PlannerConfig)})
    ints = {"n", "max_iters", "n_f"}
    nullable = {"beta", "beta_max", "max_range"}
    kw = {}
    for k, v in pl.items():
        if k in ints:
            kw[k] = r.integer(v, f"planner.{k}")
        else:
            kw[k] = r.number(v, f"planner.{k}", allow_none=k in nullable)
    if kw.get("beta", 0.0) is None:
        kw["beta"] = math.inf
    if kw.get("max_range") is None:
        kw["max_range"] = workspace.diagonal
    planner = PlannerConfig(**kw)

    m = r.obj(raw.get("mc", {}), "mc", {f.name for f in fields(MCConfig)})
    kw = {}
    for k, v in m.items():
        path = f"mc.{k}"
        if k in ("trials", "rng_seed"):
            kw[k] = r.integer(v, path)
        elif k == "u_max":
            kw[k] = r.vec3(v, path)
        elif k == "Q":
            if not (isinstance(v, list) and len(v) == 2 and all(isinstance(row, list) and len(row) == 2 for row in v)):
                r.fail("expected a 2x2 matrix", path)
            kw[k] = tuple(tuple(r.number(x, path) for x in row) for row in v)
        else:
            kw[k] = r.number(v, path, allow_none=True)
    if kw.get("dt_sim") is None:
        kw["dt_sim"] = planner.dt
    mc = MCConfig(**kw)

    hs = r.obj(raw.get("heuristic", {}), "heuristic", {f.name for f in fields(HeuristicSource)})
    heuristic = HeuristicSource(
        source=r.string(hs.get("source", "feature-count"), "heuristic.source"),
        path=None if hs.get("path") is None else r.string(hs["path"], "heuristic.path"),
        k_nn=r.integer(hs.get("k_nn", 8), "heuristic.k_nn"),
        w_yaw=r.number(hs.get("w_yaw", 1.0), "heuristic.w_yaw"),
    )

    scenario = Scenario(workspace, x_init, goal, obstacles, features, mode, planner, mc, heuristic, str(base_dir))
    validate(scenario)
    return scenario


def validate(s: Scenario) -> None:
    """Raise ValidationError naming the first violated invariant."""
    p, mc = s.planner, s.mc
    if s.mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if p.n < 1:
        raise ValidationError("planner.n must be >= 1")
    if not p.r_n > 0:
        raise ValidationError("planner.r_n must be positive")
    if not 0 < p.epsilon <= 1:
        raise ValidationError("planner.epsilon must lie in (0, 1]")
    if not p.beta >= 0:
        raise ValidationError("planner.beta must be non-negative")
    if p.n_f < 1:
        raise ValidationError("planner.n_f must be >= 1")
    if not p.dt > 0 or not p.nominal_speed > 0:
        raise ValidationError("planner.dt and planner.nominal_speed must be positive")
    if not 0 < p.fov_half_angle <= math.pi:
        raise ValidationError("planner.fov_half_angle must lie in (0, pi]")
    if p.max_range is not None and not p.max_range > 0:
        raise ValidationError("planner.max_range must be positive")
    if p.max_iters < 1:
        raise ValidationError("planner.max_iters must be >= 1")
    for b in (s.goal, *s.obstacles):
        if not all(a >= lo and c <= hi for a, c, lo, hi in zip(b.lo, b.hi, s.workspace.lo, s.workspace.hi)):
            raise ValidationError("goal and obstacle boxes must lie inside the workspace")
    if not s.workspace.contains(s.x_init.position):
        raise ValidationError("x_init must lie inside the workspace")
    if s.heuristic.source not in SOURCES:
        raise ValidationError(f"heuristic.source must be one of {SOURCES}")
    if s.heuristic.source == "heuristic-map" and not s.heuristic.path:
        raise ValidationError("heuristic-map source requires heuristic.path")
    if s.heuristic.k_nn < 1:
        raise ValidationError("heuristic.k_nn must be >= 1")

    if mc.trials < 1:
        raise ValidationError("mc.trials must be >= 1")
    if mc.dt_sim is not None and not mc.dt_sim > 0:
        raise ValidationError("mc.dt_sim must be positive")
    if not all(u > 0 for u in mc.u_max):
        raise ValidationError("mc.u_max must be positive")
    if mc.rng_seed < 0:
        raise ValidationError("mc.rng_seed must be non-negative")
    if s.mode in ("verify", "refine"):
        for name in ("delta_xhat", "alpha", "sigma_imu", "sigma_vis"):
            if getattr(mc, name) is None:
                raise ValidationError(f"mc.{name} is required in {s.mode} mode")
        if mc.delta_xhat < 0:
            raise ValidationError("mc.delta_xhat must be non-negative")
        if not 0 < mc.alpha < 1:
            raise ValidationError("mc.alpha must lie in (0, 1)")
        if mc.sigma_imu < 0 or mc.sigma_vis < 0:
            raise ValidationError("mc noise levels must be non-negative")
        Q = np.array(mc.Q)
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < 0 or not mc.R > 0:
            raise ValidationError("mc.Q must be symmetric PSD and mc.R positive")
    if s.mode == "refine":
        if p.beta_max is None or not math.isfinite(p.beta_max) or p.beta_max < 0:
            raise ValidationError("planner.beta_max (finite, >= 0) is required in refine mode")


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), base_dir=str(path.parent))


def with_mode(s: Scenario, mode: str) -> Scenario:
    s = replace(s, mode=mode)
    validate(s)
    return s


def scenario_to_dict(s: Scenario) -> dict:
    def box(b):
        return {"lo": list(b.lo), "hi": list(b.hi)}

    p, mc, hs = s.planner, s.mc, s.heuristic
    heuristic = {"source": hs.source, "k_nn": hs.k_nn, "w_yaw": hs.w_yaw}
    if hs.path is not None:
        heuristic["path"] = hs.path
    return {
        "workspace": box(s.workspace),
        "obstacles": [box(b) for b in s.obstacles],
        "features": [list(f) for f in s.features],
        "x_init": {"position": list(s.x_init.position), "yaw": s.x_init.yaw},
        "goal": box(s.goal),
        "mode": s.mode,
        "planner": {
            "n": p.n, "r_n": p.r_n, "epsilon": p.epsilon,
            "beta": None if math.isinf(p.beta) else p.beta,
            "beta_max": p.beta_max, "max_iters": p.max_iters, "n_f": p.n_f, "dt": p.dt,
            "nominal_speed": p.nominal_speed, "fov_half_angle": p.fov_half_angle, "max_range": p.max_range,
        },
        "mc": {
            "trials": mc.trials, "delta_xhat": mc.delta_xhat, "alpha": mc.alpha,
            "sigma_imu": mc.sigma_imu, "sigma_vis": mc.sigma_vis, "dt_sim": mc.dt_sim,
            "rng_seed": mc.rng_seed, "u_max": list(mc.u_max), "Q": [list(row) for row in mc.Q], "R": mc.R,
        },
        "heuristic": heuristic,
    }


def write_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
