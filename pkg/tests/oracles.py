"""Independent reference implementations shared by the unit and acceptance tests."""
import itertools
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.stats import chi2

from percplan.environment import PlannerState
from percplan.heuristic import EdgeProfile, fold_heuristic
from percplan.roadmap import Roadmap


def reference_fold(h0, incs):
    h = h0
    for x in incs:
        h = max(0.0, h + x)
    return h


def graph(edges, n, goal, r_n=1.0):
    """Roadmap from ``{(u, v): cost}``; positions are irrelevant to the search."""
    nbrs = [[] for _ in range(n)]
    for (u, v), c in edges.items():
        nbrs[u].append((v, c))
        nbrs[v].append((u, c))
    for lst in nbrs:
        lst.sort()
    nodes = [PlannerState((float(i), 0.0, 0.0)) for i in range(n)]
    return Roadmap(nodes, nbrs, r_n, n, tuple(goal))


def shortest_goal_cost(rm):
    n = len(rm.nodes)
    rows, cols, w = zip(*rm.directed_edges())
    dist = dijkstra(csr_matrix((w, (rows, cols)), shape=(n, n)), indices=0)
    return min(dist[g] for g in rm.goal_nodes)


def random_graph(seed, n=None):
    """Connected graph on <= 10 nodes, costs in [1, 3], positive profiles.

    With epsilon * r_n = 0.15 below every edge cost, waves never mix a plan
    with a cheaper plan that could reach the same node later.
    """
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(4, 11))
    order = rng.permutation(n)
    edges = {}
    for a, b in zip(order, order[1:]):
        edges[tuple(sorted((int(a), int(b))))] = float(rng.uniform(1, 3))
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and rng.random() < 0.15:
            edges[(u, v)] = float(rng.uniform(1, 3))
    prof = {}
    for u, v in edges:
        for e in ((u, v), (v, u)):
            prof[e] = EdgeProfile(tuple(float(x) for x in rng.uniform(0.01, 1.0, int(rng.integers(1, 5)))))
    return graph(edges, n, [n - 1], r_n=3.0), prof


def brute_force_front(rm, prof, goal, max_edges):
    """All walks from node 0 with at most `max_edges` edges, filtered by dominance.

    With positive increments, cutting a cycle out of a walk lowers its cost
    and does not raise its folded heuristic, so every Pareto-optimal walk is a
    simple path and ``max_edges = n - 1`` covers them all.
    """
    ends = []
    stack = [(0, 0.0, 0.0, 0)]
    while stack:
        v, c, h, k = stack.pop()
        if v == goal:
            ends.append((c, h))
        if k == max_edges:
            continue
        for w, cw in rm.neighbors[v]:
            stack.append((w, c + cw, fold_heuristic(h, prof[(v, w)]), k + 1))
    return sorted({p for p in ends if not any(q[0] < p[0] and q[1] <= p[1] for q in ends)})


def exceedance_probability(delta, sigma, dt):
    # One step: error = sigma dt^2 * N(0, I_3), so |e|^2 / (sigma dt^2)^2 ~ chi2(3).
    return chi2.sf((delta / (sigma * dt * dt)) ** 2, 3)


def binomial_se(p, n):
    return math.sqrt(p * (1 - p) / n)
