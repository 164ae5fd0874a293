"""Perception heuristic: per-edge increment profiles and the clamped fold.

Each edge is discretized into timesteps of length ``dt`` at ``nominal_speed``.
Every step costs ``dt`` of drift, and each visible feature pays back
``dt / n_f``. The running value is clamped at zero, so the heuristic of a
path must be folded step by step in path order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import Environment, PlannerState, VisibilityParams, visible_counts, wrap_angle
from .parallel import pmap, split


@dataclass(frozen=True)
class HeuristicParams:
    dt: float = 0.1
    n_f: int = 12
    nominal_speed: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_f < 1:
            raise ValueError("n_f must be >= 1")
        if not self.nominal_speed > 0:
            raise ValueError("nominal_speed must be positive")


@dataclass(frozen=True)
class EdgeProfile:
    increments: tuple[float, ...]

    def __len__(self):
        return len(self.increments)


@dataclass
class HeuristicMap:
    """Scattered samples of a per-second error rate, queried by weighted k-NN."""

    positions: np.ndarray
    velocities: np.ndarray
    yaws: np.ndarray
    rates: np.ndarray
    k_nn: int = 8
    w_yaw: float = 1.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        self.yaws = np.asarray(self.yaws, dtype=float).reshape(-1)
        self.rates = np.asarray(self.rates, dtype=float).reshape(-1)
        n = len(self.rates)
        if n == 0:
            raise ValueError("heuristic map is empty")
        if not (len(self.positions) == len(self.velocities) == len(self.yaws) == n):
            raise ValueError("heuristic map columns have different lengths")
        if self.k_nn < 1:
            raise ValueError("k_nn must be >= 1")

    @classmethod
    def from_records(cls, records, k_nn=8, w_yaw=1.0):
        return cls(
            [r["position"] for r in records],
            [r["velocity"] for r in records],
            [r["yaw"] for r in records],
            [r["rate"] for r in records],
            k_nn=k_nn,
            w_yaw=w_yaw,
        )

    @classmethod
    def load(cls, path, k_nn=8, w_yaw=1.0):
        """Read a JSON array of ``{position, velocity, yaw, rate}`` records."""
        records = json.loads(Path(path).read_text())
        return cls.from_records(records, k_nn=k_nn, w_yaw=w_yaw)

    def to_records(self):
        return [
            {"position": p.tolist(), "velocity": v.tolist(), "yaw": float(y), "rate": float(r)}
            for p, v, y, r in zip(self.positions, self.velocities, self.yaws, self.rates)
        ]


def step_count(length: float, hp: HeuristicParams) -> int:
    # The 1e-9 slack keeps exact multiples (1.0 m at 0.1 m/step) from gaining a step.
    return max(1, math.ceil(length / (hp.nominal_speed * hp.dt) - 1e-9))


def edge_states(pu, yu, pv, yv, hp: HeuristicParams):
    """States at the start of each timestep along straight edges.

    Accepts batches: positions (E, 3), yaws (E,). Returns ``(edge_index,
    positions, yaws, velocities)`` for every step, edges in order. The
    terminal state of an edge is excluded (it is the first step of the next).
    """
    pu = np.asarray(pu, dtype=float).reshape(-1, 3)
    pv = np.asarray(pv, dtype=float).reshape(-1, 3)
    yu = np.asarray(yu, dtype=float).reshape(-1)
    yv = np.asarray(yv, dtype=float).reshape(-1)
    delta = pv - pu
    length = np.sqrt(delta[:, 0] * delta[:, 0] + delta[:, 1] * delta[:, 1] + delta[:, 2] * delta[:, 2])
    steps = np.array([step_count(L, hp) for L in length.tolist()], dtype=np.int64)
    edge = np.repeat(np.arange(len(pu)), steps)
    offsets = np.concatenate([[0], np.cumsum(steps)[:-1]]) if len(steps) else np.zeros(0, dtype=np.int64)
    t = np.arange(int(steps.sum())) - np.repeat(offsets, steps)
    L = length[edge]
    step_len = hp.nominal_speed * hp.dt
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(L > 0, (t * step_len) / L, 0.0)
    pos = pu[edge] + frac[:, None] * delta[edge]
    dyaw = wrap_angle(yv - yu)[edge]
    yaw = wrap_angle(yu[edge] + frac * dyaw)
    with np.errstate(divide="ignore", invalid="ignore"):
        direction = np.where(L[:, None] > 0, delta[edge] / L[:, None], 0.0)
    vel = direction * hp.nominal_speed
    return edge, pos, yaw, vel


def feature_increments(counts, hp: HeuristicParams) -> np.ndarray:
    """``dt - k*dt/n_f`` written as ``dt*(1 - k/n_f)`` so k = n_f gives exactly 0."""
    return hp.dt * (1.0 - np.asarray(counts, dtype=float) / hp.n_f)


def _sq_dist(positions, velocities, yaws, hm: HeuristicMap) -> np.ndarray:
    """(S, M) squared query distances ``|dp|^2 + |dv|^2 + w_yaw * dyaw^2``, summed in that order."""
    def sq(a, b):
        out = None
        for j in range(3):
            t = a[:, j, None] - b[None, :, j]
            t *= t
            out = t if out is None else out + t
        return out

    dy = yaws[:, None] - hm.yaws[None]
    dy += math.pi
    np.mod(dy, 2 * math.pi, out=dy)
    dy -= math.pi
    dy *= dy
    dy *= hm.w_yaw
    return sq(positions, hm.positions) + sq(velocities, hm.velocities) + dy


def _nearest(d2: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k smallest entries per row, ordered by (value, index).

    Same answer as a stable full argsort truncated to k columns. Rows with a
    tie at the k-th value take the full sort.
    """
    m = d2.shape[1]
    if k >= m:
        return np.argsort(d2, axis=1, kind="stable")
    part = np.argpartition(d2, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(d2, part, axis=1)
    kth = vals.max(axis=1)
    # Sort the k candidates by (value, index).
    idx = np.sort(part, axis=1)
    vals = np.take_along_axis(d2, idx, axis=1)
    order = np.take_along_axis(idx, np.argsort(vals, axis=1, kind="stable"), axis=1)
    tied = (d2 <= kth[:, None]).sum(axis=1) > k
    if tied.any():
        order[tied] = np.argsort(d2[tied], axis=1, kind="stable")[:, :k]
    return order


def map_rates(positions, velocities, yaws, hm: HeuristicMap, chunk: int = 1024) -> np.ndarray:
    """Vectorized `map_rate`."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 3)
    yaws = np.asarray(yaws, dtype=float).reshape(-1)
    k = min(hm.k_nn, len(hm.rates))
    out = np.empty(len(positions))
    for start in range(0, len(positions), chunk):
        sl = slice(start, start + chunk)
        d2 = _sq_dist(positions[sl], velocities[sl], yaws[sl], hm)
        order = _nearest(d2, k)
        dsel = np.sqrt(np.take_along_axis(d2, order, axis=1))
        rsel = hm.rates[order]
        exact = dsel == 0.0
        with np.errstate(divide="ignore"):
            w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dsel)
        out[sl] = (w * rsel).sum(axis=1) / w.sum(axis=1)
    return out


def map_rate(s: PlannerState, velocity, hm: HeuristicMap) -> float:
    """Inverse-distance-weighted rate over the `k_nn` nearest map records."""
    return float(map_rates([s.position], [velocity], [s.yaw], hm)[0])


def _profiles_batch(args):
    pu, yu, pv, yv, env, vp, hp, hmap = args
    edge, pos, yaw, vel = edge_states(pu, yu, pv, yv, hp)
    if hmap is None:
        inc = feature_increments(visible_counts(pos, yaw, env, vp), hp)
    else:
        inc = map_rates(pos, vel, yaw, hmap) * hp.dt
    bounds = np.flatnonzero(np.diff(edge)) + 1
    return [EdgeProfile(tuple(chunk.tolist())) for chunk in np.split(inc, bounds)]


def edge_profile(u: PlannerState, v: PlannerState, env: Environment, vp: VisibilityParams,
                 hp: HeuristicParams, hmap: HeuristicMap | None = None) -> EdgeProfile:
    """Per-timestep heuristic increments for the straight edge u -> v."""
    return _profiles_batch(([u.position], [u.yaw], [v.position], [v.yaw], env, vp, hp, hmap))[0]


def profiles_for_roadmap(roadmap, env: Environment, vp: VisibilityParams, hp: HeuristicParams,
                         hmap: HeuristicMap | None = None, workers: int = 1,
                         batch_edges: int = 512) -> dict[tuple[int, int], EdgeProfile]:
    """Profiles for every directed edge of the roadmap, keyed ``(u, v)``."""
    directed = [(u, v) for u, v, _ in roadmap.directed_edges()]
    if not directed:
        return {}
    pos = roadmap.positions
    yaw = roadmap.yaws
    src = np.array([u for u, _ in directed])
    dst = np.array([v for _, v in directed])
    n_batches = max(1, math.ceil(len(directed) / batch_edges))
    jobs = [(pos[src[sl]], yaw[src[sl]], pos[dst[sl]], yaw[dst[sl]], env, vp, hp, hmap)
            for sl in split(len(directed), n_batches)]
    profiles = [p for batch in pmap(_profiles_batch, jobs, workers) for p in batch]
    return dict(zip(directed, profiles))


def fold_heuristic(h0: float, profile) -> float:
    """Apply ``h <- max(0, h + increment)`` left to right, starting from `h0`."""
    increments = profile.increments if isinstance(profile, EdgeProfile) else profile
    h = h0
    for inc in increments:
        h = h + inc
        if not h > 0.0:
            h = 0.0
    return h


def fold_path(profiles, path, h0: float = 0.0) -> float:
    """Fold the heuristic along a node sequence."""
    h = h0
    for u, v in zip(path, path[1:]):
        h = fold_heuristic(h, profiles[(u, v)])
    return h
