"""Multiobjective (cost, perception heuristic) search over a roadmap.

Plans are expanded in groups: at wave ``i`` every open plan with cost at most
``i * epsilon * r_n`` is expanded to all neighbors of its head. Children whose
heuristic exceeds ``beta`` are dropped, open plans dominated by a stored plan
with the same head are removed, and the search stops once a group holds a
goal plan within the bound (or nothing is left open).

Each wave is data parallel over the group. Children are merged in
(parent order, neighbor order) before any pruning, so the worker count never
changes the outcome.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import NoFeasiblePlan
from .heuristic import fold_heuristic
from .parallel import pmap, split


@dataclass(frozen=True)
class Plan:
    """A walk from node 0: ancestors in `path`, terminal node in `head`."""

    head: int
    path: tuple[int, ...]
    cost: float
    h: float

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.path + (self.head,)


@dataclass(frozen=True)
class ExploreParams:
    epsilon: float = 0.5
    beta: float = math.inf

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")


class _Label:
    """Search-internal plan record; the path is recovered from parent links."""

    __slots__ = ("head", "parent", "cost", "h", "open")

    def __init__(self, head, parent, cost, h):
        self.head = head
        self.parent = parent
        self.cost = cost
        self.h = h
        self.open = True

    def nodes(self) -> tuple[int, ...]:
        out = []
        lbl = self
        while lbl is not None:
            out.append(lbl.head)
            lbl = lbl.parent
        return tuple(reversed(out))

    def to_plan(self) -> Plan:
        nodes = self.nodes()
        return Plan(self.head, nodes[:-1], self.cost, self.h)


def dominates(p_dom, p) -> bool:
    """Strictly cheaper and no worse on the heuristic."""
    return p.cost > p_dom.cost and p.h >= p_dom.h


def bucket_index(cost: float, epsilon: float, r_n: float) -> int:
    """Half-open bucket ``[i*epsilon*r_n, (i+1)*epsilon*r_n)`` holding `cost`."""
    return math.floor(cost / (epsilon * r_n))


def dominated_flags(items) -> list[bool]:
    """For each item, whether some other item in the list dominates it.

    Sort by cost and sweep; an item is dominated iff the best heuristic among
    strictly cheaper items is <= its own.
    """
    order = sorted(range(len(items)), key=lambda k: (items[k].cost, items[k].h))
    flags = [False] * len(items)
    best_h = math.inf
    k = 0
    while k < len(order):
        j = k
        cost = items[order[k]].cost
        while j < len(order) and items[order[j]].cost == cost:
            j += 1
        for idx in order[k:j]:
            flags[idx] = items[idx].h >= best_h
        # Equal-cost items never dominate each other; fold them in afterwards.
        best_h = min(best_h, items[order[k]].h)
        k = j
    return flags


def remove_dominated(P, P_open):
    """Drop every open plan dominated by a stored plan with the same head.

    `P` maps head -> list of plans and `P_open` is a collection of plans.
    Returns new ``(P, P_open)``; stored plans that are not open are kept.
    """
    open_set = set(P_open)
    removed = set()
    new_P = {}
    for head, plans in P.items():
        flags = dominated_flags(plans)
        keep = []
        for plan, dom in zip(plans, flags):
            if dom and plan in open_set:
                removed.add(plan)
            else:
                keep.append(plan)
        new_P[head] = keep
    if isinstance(P_open, (set, frozenset)):
        return new_P, {p for p in P_open if p not in removed}
    return new_P, [p for p in P_open if p not in removed]


@dataclass
class SearchResult:
    plan: Plan | None
    labels: dict = field(default_factory=dict, repr=False)
    waves: int = 0
    expanded: int = 0

    def plans_at(self, v: int) -> list[Plan]:
        return [q.to_plan() for q in self.labels.get(v, [])]

    def fronts(self, nodes=None) -> dict[int, list[tuple[float, float]]]:
        """Surviving ``(cost, h)`` pairs per node, sorted."""
        keys = sorted(self.labels) if nodes is None else sorted(nodes)
        return {v: sorted((q.cost, q.h) for q in self.labels.get(v, [])) for v in keys}


def _expand(args):
    group, neighbors, profiles, beta = args
    out = []
    for p in group:
        head = p.head
        for x, c in neighbors[head]:
            h = fold_heuristic(p.h, profiles[(head, x)])
            if h <= beta:
                out.append((p, x, p.cost + c, h))
    return out


def search(roadmap, profiles, params: ExploreParams, *, workers: int = 1,
           exhaustive: bool = False) -> SearchResult:
    """Run the grouped Pareto search.

    With ``exhaustive=True`` the goal stopping test is skipped and the search
    runs until no plan is open, which leaves complete fronts at every node.
    """
    beta = params.beta
    step = params.epsilon * roadmap.r_n
    is_goal = roadmap.is_goal
    neighbors = roadmap.neighbors

    root = _Label(0, None, 0.0, 0.0)
    P: dict[int, list[_Label]] = defaultdict(list)
    P[0].append(root)
    buckets: dict[int, list[_Label]] = {0: [root]}
    n_open = 1
    group = [root]
    i = 0
    waves = 0
    expanded = 0

    while n_open and (exhaustive or not any(is_goal(g.head) and g.h <= beta for g in group)):
        if group:
            waves += 1
            expanded += len(group)
            jobs = [(group[sl], neighbors, profiles, beta) for sl in split(len(group), max(workers, 1) * 4)]
            touched = []
            seen = set()
            for chunk in pmap(_expand, jobs, workers):
                for parent, x, cost, h in chunk:
                    q = _Label(x, parent, cost, h)
                    P[x].append(q)
                    buckets.setdefault(bucket_index(cost, params.epsilon, roadmap.r_n), []).append(q)
                    n_open += 1
                    if x not in seen:
                        seen.add(x)
                        touched.append(x)
            for x in touched:
                plans = P[x]
                flags = dominated_flags(plans)
                keep = []
                for q, dom in zip(plans, flags):
                    if dom and q.open:
                        q.open = False
                        n_open -= 1
                    else:
                        keep.append(q)
                P[x] = keep
            for g in group:
                if g.open:
                    g.open = False
                    n_open -= 1
        i += 1
        group = _next_group(buckets, i, step)
        if not group and n_open:
            # Waves with an empty group change nothing; jump to the next
            # threshold that captures an open plan.
            lowest = min(q.cost for b in buckets.values() for q in b if q.open)
            i = max(i, math.ceil(lowest / step))
            while lowest > i * step:
                i += 1
            group = _next_group(buckets, i, step)

    candidates = [q for v in roadmap.goal_nodes for q in P.get(v, []) if q.h <= beta]
    best = None
    if candidates:
        best = min(candidates, key=lambda q: (q.cost, q.h, q.nodes())).to_plan()
    return SearchResult(best, dict(P), waves, expanded)


def _next_group(buckets, i, step):
    threshold = i * step
    group = []
    for b in sorted(k for k in buckets if k <= i):
        stay = []
        for q in buckets[b]:
            if not q.open:
                continue
            if q.cost <= threshold:
                group.append(q)
            else:
                stay.append(q)
        if stay:
            buckets[b] = stay
        else:
            del buckets[b]
    return group


def explore(roadmap, profiles, params: ExploreParams, *, workers: int = 1) -> Plan:
    """Minimum-cost goal plan with heuristic within ``params.beta``."""
    result = search(roadmap, profiles, params, workers=workers)
    if result.plan is None:
        raise NoFeasiblePlan(f"no goal plan with h <= {params.beta}")
    return result.plan


def plan_cost(plan: Plan, roadmap) -> float:
    cost = 0.0
    nodes = plan.nodes
    for u, v in zip(nodes, nodes[1:]):
        cost = cost + roadmap.edge_cost(u, v)
    return cost
