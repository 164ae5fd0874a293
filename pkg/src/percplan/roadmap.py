"""Halton sampling of free space and r-disc roadmap construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .environment import (
    Box,
    Environment,
    PlannerState,
    in_goal,
    point_free,
    segments_hit_boxes,
)
from .errors import InfeasibleSpace, NoGoalSample
from .parallel import pmap, split

HALTON_BASES = (2, 3, 5, 7)


@dataclass
class Roadmap:
    """Samples and symmetric neighbor lists.

    ``neighbors[v]`` is a list of ``(u, cost)`` sorted by ``u``. Node 0 is the
    initial state; ``goal_nodes`` lists every node inside the goal box.
    """

    nodes: list[PlannerState]
    neighbors: list[list[tuple[int, float]]]
    r_n: float
    n: int
    goal_nodes: tuple[int, ...] = ()

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.nodes], dtype=float).reshape(-1, 3)

    @property
    def yaws(self) -> np.ndarray:
        return np.array([s.yaw for s in self.nodes], dtype=float)

    def edges(self):
        """Undirected edges ``(u, v, cost)`` with ``u < v``."""
        for u, nbrs in enumerate(self.neighbors):
            for v, c in nbrs:
                if u < v:
                    yield u, v, c

    def directed_edges(self):
        for u, nbrs in enumerate(self.neighbors):
            for v, c in nbrs:
                yield u, v, c

    def edge_cost(self, u: int, v: int) -> float:
        for w, c in self.neighbors[u]:
            if w == v:
                return c
        raise KeyError((u, v))

    def is_goal(self, v: int) -> bool:
        return v in self._goal_set

    def __post_init__(self):
        self._goal_set = frozenset(self.goal_nodes)


def halton(index: int, base: int) -> float:
    """Radical inverse of `index` in `base`."""
    if index < 1:
        raise ValueError("Halton index starts at 1")
    result, f = 0.0, 1.0
    i = index
    while i > 0:
        f /= base
        result += f * (i % base)
        i //= base
    return result


def halton_point(index: int, env: Environment) -> PlannerState:
    lo, hi = env.workspace.lo, env.workspace.hi
    pos = tuple(lo[d] + halton(index, HALTON_BASES[d]) * (hi[d] - lo[d]) for d in range(3))
    yaw = -math.pi + 2 * math.pi * halton(index, HALTON_BASES[3])
    return PlannerState(pos, yaw)


def sample_free(n: int, env: Environment, dims: int = 4) -> list[PlannerState]:
    """First `n` collision-free points of the 4D Halton sequence (x, y, z, yaw)."""
    if dims != 4:
        raise ValueError("samples are (x, y, z, yaw)")
    if n < 1:
        raise ValueError("n must be >= 1")
    out: list[PlannerState] = []
    index = 0
    misses = 0
    while len(out) < n:
        index += 1
        s = halton_point(index, env)
        if point_free(s.position, env):
            out.append(s)
            misses = 0
        else:
            misses += 1
            if misses >= 100 * n:
                raise InfeasibleSpace(f"{misses} consecutive samples in collision")
    return out


def edge_cost(u: PlannerState, v: PlannerState) -> float:
    """Euclidean distance between positions; yaw is free."""
    dx = u.position[0] - v.position[0]
    dy = u.position[1] - v.position[1]
    dz = u.position[2] - v.position[2]
    return float(np.sqrt(np.float64(dx * dx + dy * dy + dz * dz)))


def pair_costs(pos: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    # Same operation order as edge_cost so scalar and batched costs agree exactly.
    dx = pos[i, 0] - pos[j, 0]
    dy = pos[i, 1] - pos[j, 1]
    dz = pos[i, 2] - pos[j, 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _check_pairs(args):
    pos, i, j, r_n, lo, hi = args
    cost = pair_costs(pos, i, j)
    keep = cost < r_n
    hit = segments_hit_boxes(pos[i], pos[j], lo, hi)
    keep &= ~hit
    return i[keep], j[keep], cost[keep]


def build_graph(env: Environment, n: int, r_n: float, x_init: PlannerState, goal: Box,
                workers: int = 1) -> Roadmap:
    """r-disc roadmap over ``{x_init} + sample_free(n)``.

    The goal-box center is appended when no sample lands in the goal. The
    result does not depend on `workers`.
    """
    if r_n <= 0:
        raise ValueError("r_n must be positive")
    if not point_free(x_init.position, env):
        raise ValueError("x_init is not in free space")
    samples = sample_free(n, env)
    nodes = [x_init] + samples
    if not any(in_goal(s.position, goal) for s in samples):
        center = tuple(goal.center)
        if not point_free(center, env):
            raise NoGoalSample("goal center is in collision and no sample lies in the goal")
        nodes.append(PlannerState(center, 0.0))
    pos = np.array([s.position for s in nodes], dtype=float)

    # Candidate pairs from a KD-tree with a slightly inflated radius; the exact
    # strict test `cost < r_n` is applied with pair_costs.
    pairs = cKDTree(pos).query_pairs(r_n * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    i_all = pairs[:, 0] if len(pairs) else np.zeros(0, dtype=np.int64)
    j_all = pairs[:, 1] if len(pairs) else np.zeros(0, dtype=np.int64)

    jobs = [(pos, i_all[sl], j_all[sl], r_n, env.obs_lo, env.obs_hi)
            for sl in split(len(i_all), max(workers, 1) * 4)]
    neighbors: list[list[tuple[int, float]]] = [[] for _ in nodes]
    for ii, jj, cc in pmap(_check_pairs, jobs, workers):
        for a, b, c in zip(ii.tolist(), jj.tolist(), cc.tolist()):
            neighbors[a].append((b, c))
            neighbors[b].append((a, c))
    for nbrs in neighbors:
        nbrs.sort()
    goal_nodes = tuple(k for k, s in enumerate(nodes) if in_goal(s.position, goal))
    return Roadmap(nodes, neighbors, float(r_n), n, goal_nodes)
