"""Geometry kernel: workspace, box obstacles, goal membership, collision and visibility.

All obstacle boxes are closed: touching a face counts as a collision. The
batched kernels (`segments_hit_boxes`, `visibility_mask`) are the only
implementations; the scalar helpers call them with a batch of one so that
scalar and batched answers agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]`` in meters."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("box bounds must be 3-vectors")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"box requires lo < hi component-wise, got {self.lo} / {self.hi}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def contains(self, p) -> bool:
        """Closed-box membership."""
        return all(lo <= x <= hi for lo, x, hi in zip(self.lo, p, self.hi))


# The workspace, obstacles and goal share one representation.
Workspace = Box
Obstacle = Box
GoalRegion = Box


@dataclass(frozen=True)
class PlannerState:
    """Roadmap sample: position plus yaw in [-pi, pi)."""

    position: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))


@dataclass(frozen=True)
class VisibilityParams:
    fov_half_angle: float = math.pi / 4
    max_range: float = math.inf

    def __post_init__(self):
        if not 0 < self.fov_half_angle <= math.pi:
            raise ValueError("fov_half_angle must lie in (0, pi]")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


@dataclass
class Environment:
    workspace: Box
    obstacles: list[Box] = field(default_factory=list)
    features: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, 3)
        self.obstacles = list(self.obstacles)
        self._feature_tree = None
        if self.obstacles:
            self.obs_lo = np.array([b.lo for b in self.obstacles])
            self.obs_hi = np.array([b.hi for b in self.obstacles])
        else:
            self.obs_lo = np.zeros((0, 3))
            self.obs_hi = np.zeros((0, 3))

    def with_features(self, features) -> "Environment":
        return Environment(self.workspace, self.obstacles, features)

    def without_obstacle(self, index: int) -> "Environment":
        obstacles = [b for i, b in enumerate(self.obstacles) if i != index]
        return Environment(self.workspace, obstacles, self.features)


def wrap_angle(a):
    """Map angles to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


def in_workspace(p, env: Environment) -> bool:
    return env.workspace.contains(p)


def point_free(p, env: Environment) -> bool:
    """True iff `p` is inside the workspace and outside every closed obstacle."""
    p = np.asarray(p, dtype=float)
    if not env.workspace.contains(p):
        return False
    if not env.obstacles:
        return True
    inside = np.all((p >= env.obs_lo) & (p <= env.obs_hi), axis=1)
    return not bool(inside.any())


def points_free(points, env: Environment) -> np.ndarray:
    """Vectorized `point_free` over an (N, 3) array."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    lo = np.asarray(env.workspace.lo)
    hi = np.asarray(env.workspace.hi)
    ok = np.all((points >= lo) & (points <= hi), axis=1)
    if env.obstacles:
        p = points[:, None, :]
        hit = np.all((p >= env.obs_lo) & (p <= env.obs_hi), axis=2).any(axis=1)
        ok &= ~hit
    return ok


def segments_hit_boxes(a, b, lo, hi) -> np.ndarray:
    """Exact slab clipping of closed segments ``[a, b]`` against closed boxes.

    `a` and `b` have shape (..., 3); `lo`/`hi` have shape (M, 3). Returns a
    boolean array of shape (...) that is true where the segment meets any box.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(lo) == 0:
        return np.zeros(a.shape[:-1], dtype=bool)
    d = (b - a)[..., None, :]
    a = a[..., None, :]
    parallel = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    in_slab = (a >= lo) & (a <= hi)
    t_enter = np.where(parallel, np.where(in_slab, -np.inf, np.inf), np.minimum(t1, t2))
    t_exit = np.where(parallel, np.where(in_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = np.maximum(t_enter.max(axis=-1), 0.0)
    t_exit = np.minimum(t_exit.min(axis=-1), 1.0)
    return (t_enter <= t_exit).any(axis=-1)


def segment_collides(a, b, env: Environment) -> bool:
    """True iff the closed segment [a, b] meets the closed union of obstacles."""
    a = np.asarray(a, dtype=float).reshape(1, 3)
    b = np.asarray(b, dtype=float).reshape(1, 3)
    return bool(segments_hit_boxes(a, b, env.obs_lo, env.obs_hi)[0])


def in_goal(p, goal: Box) -> bool:
    return goal.contains(p)


def _candidate_pairs(positions, env: Environment, vp: VisibilityParams):
    """(state, feature) index pairs that may be within range (unordered)."""
    S, K = len(positions), len(env.features)
    if math.isfinite(vp.max_range) and K > 32:
        if env._feature_tree is None:
            env._feature_tree = cKDTree(env.features)
        # Inflated radius; the exact range test is applied per pair afterwards.
        m = cKDTree(positions).sparse_distance_matrix(
            env._feature_tree, vp.max_range * (1 + 1e-9) + 1e-12, output_type="ndarray")
        return m["i"].astype(np.int64), m["j"].astype(np.int64)
    si, ki = np.divmod(np.arange(S * K, dtype=np.int64), K)
    return si, ki


def visible_pairs(positions, yaws, env: Environment, vp: VisibilityParams):
    """Index pairs ``(state, feature)`` such that the feature is visible.

    A feature is visible when it is within `max_range`, within
    `fov_half_angle` (full 3D angle) of the horizontal heading and the sight
    line does not touch an obstacle.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    yaws = np.asarray(yaws, dtype=float).reshape(-1)
    feats = env.features
    if len(feats) == 0 or len(positions) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    si, ki = _candidate_pairs(positions, env, vp)
    rel = feats[ki] - positions[si]
    rx, ry, rz = rel[:, 0], rel[:, 1], rel[:, 2]
    dist = np.sqrt(rx * rx + ry * ry + rz * rz)
    dot = rx * np.cos(yaws)[si] + ry * np.sin(yaws)[si]
    # angle <= fov  <=>  cos(angle) >= cos(fov); a feature at the camera center counts as ahead.
    keep = (dist <= vp.max_range) & (dot >= dist * math.cos(vp.fov_half_angle))
    si, ki = si[keep], ki[keep]
    if env.obstacles and len(si):
        blocked = segments_hit_boxes(positions[si], feats[ki], env.obs_lo, env.obs_hi)
        si, ki = si[~blocked], ki[~blocked]
    return si, ki


def visibility_mask(positions, yaws, env: Environment, vp: VisibilityParams) -> np.ndarray:
    """Boolean (S, K) matrix: feature k visible from state s."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    mask = np.zeros((len(positions), len(env.features)), dtype=bool)
    si, ki = visible_pairs(positions, yaws, env, vp)
    mask[si, ki] = True
    return mask


def visible_counts(positions, yaws, env: Environment, vp: VisibilityParams, chunk: int = 4096) -> np.ndarray:
    """Number of visible features per state, evaluated in fixed-size chunks."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    yaws = np.asarray(yaws, dtype=float).reshape(-1)
    out = np.zeros(len(positions), dtype=np.int64)
    for start in range(0, len(positions), chunk):
        sl = slice(start, start + chunk)
        si, _ = visible_pairs(positions[sl], yaws[sl], env, vp)
        out[sl] = np.bincount(si, minlength=len(positions[sl]))
    return out


def visible_features(s: PlannerState, env: Environment, vp: VisibilityParams) -> list[int]:
    mask = visibility_mask([s.position], [s.yaw], env, vp)[0]
    return [int(i) for i in np.flatnonzero(mask)]
