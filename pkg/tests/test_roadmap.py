import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percplan.environment import Box, Environment, PlannerState, point_free, segment_collides
from percplan.errors import InfeasibleSpace, NoGoalSample
from percplan.roadmap import build_graph, edge_cost, halton, sample_free

UNIT = Box((0, 0, 0), (1, 1, 1))


def test_halton_examples():
    assert halton(1, 2) == 0.5
    assert halton(2, 2) == 0.25
    assert halton(3, 2) == 0.75
    assert halton(1, 3) == pytest.approx(1 / 3)
    assert halton(5, 3) == pytest.approx(2 / 3 + 1 / 9)
    with pytest.raises(ValueError):
        halton(0, 2)


@given(st.integers(1, 10**6), st.sampled_from([2, 3, 5, 7]))
def test_halton_in_open_unit_interval(i, b):
    assert 0.0 < halton(i, b) < 1.0


def test_first_sample_unit_workspace():
    (s,) = sample_free(1, Environment(UNIT))
    assert s.position == pytest.approx((0.5, 1 / 3, 0.2))
    assert s.yaw == pytest.approx(-math.pi + 2 * math.pi / 7)


def test_prefix_property():
    env = Environment(Box((0, 0, 0), (5, 5, 2)), [Box((1, 1, 0), (3, 3, 2))])
    assert sample_free(5, env)[:3] == sample_free(3, env)
    for s in sample_free(50, env):
        assert point_free(s.position, env)


def test_infeasible_space():
    env = Environment(UNIT, [Box((-1, -1, -1), (2, 2, 2))])
    with pytest.raises(InfeasibleSpace):
        sample_free(3, env)


def test_edge_cost_examples():
    assert edge_cost(PlannerState((0, 0, 0)), PlannerState((3, 4, 0))) == 5.0
    assert edge_cost(PlannerState((1, 2, 3)), PlannerState((1, 2, 3))) == 0.0
    assert edge_cost(PlannerState((0, 0, 0), 0.0), PlannerState((1, 0, 0), math.pi)) == 1.0


def two_node_env(walls=()):
    # One Halton sample lands at (5, 3.33, 1); x_init is placed 1 m away.
    ws = Box((0, 0, 0), (10, 10, 5))
    return Environment(ws, list(walls))


def test_two_nodes_one_edge():
    env = two_node_env()
    (s,) = sample_free(1, env)
    x0 = PlannerState((s.position[0] - 1.0, s.position[1], s.position[2]))
    goal = Box(np.subtract(s.position, 0.1), np.add(s.position, 0.1))
    rm = build_graph(env, 1, 2.0, x0, goal)
    assert len(rm.nodes) == 2 and rm.goal_nodes == (1,)
    assert rm.neighbors[0] == [(1, 1.0)] and rm.neighbors[1] == [(0, 1.0)]


def test_two_nodes_wall_between():
    (s,) = sample_free(1, two_node_env())
    wall = Box((s.position[0] - 0.6, 0, 0), (s.position[0] - 0.4, 10, 5))
    env = two_node_env([wall])
    x0 = PlannerState((s.position[0] - 1.0, s.position[1], s.position[2]))
    goal = Box(np.subtract(s.position, 0.1), np.add(s.position, 0.1))
    rm = build_graph(env, 1, 2.0, x0, goal)
    assert list(rm.edges()) == []


def test_goal_center_fallback():
    env = Environment(Box((0, 0, 0), (10, 10, 10)))
    goal = Box((9.9, 9.9, 9.9), (10, 10, 10))
    rm = build_graph(env, 10, 3.0, PlannerState((1, 1, 1)), goal)
    assert len(rm.nodes) == 12
    assert rm.goal_nodes == (11,)
    assert rm.nodes[11].position == pytest.approx((9.95, 9.95, 9.95))


def test_goal_center_in_collision():
    goal = Box((9, 9, 9), (10, 10, 10))
    env = Environment(Box((0, 0, 0), (10, 10, 10)), [Box((9.9, 9.9, 9.9), (10, 10, 10)), Box((9.4, 9.4, 9.4), (9.6, 9.6, 9.6))])
    # No sample lands in a 1 m corner box for small n, and the center is blocked.
    with pytest.raises(NoGoalSample):
        build_graph(env, 5, 3.0, PlannerState((1, 1, 1)), goal)


def brute_force_adjacency(rm, env):
    pos = rm.positions
    adj = set()
    for u in range(len(pos)):
        for v in range(len(pos)):
            if u != v:
                c = edge_cost(rm.nodes[u], rm.nodes[v])
                if c < rm.r_n and not segment_collides(pos[u], pos[v], env):
                    adj.add((u, v, c))
    return adj


def random_env(seed):
    rng = np.random.default_rng(seed)
    obs = [Box(lo, lo + rng.uniform(0.5, 2.5, 3)) for lo in rng.uniform(0, 8, (4, 3))]
    return Environment(Box((0, 0, 0), (10, 10, 10)), obs)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adjacency_matches_all_pairs(seed):
    env = random_env(seed)
    x0 = PlannerState((0.2, 0.2, 0.2))
    rm = build_graph(env, 100, 3.0, x0, Box((9, 9, 9), (10, 10, 10)))
    assert set(rm.directed_edges()) == brute_force_adjacency(rm, env)


def test_roadmap_invariants_and_worker_invariance():
    env = random_env(4)
    x0 = PlannerState((0.2, 0.2, 0.2))
    goal = Box((9, 9, 9), (10, 10, 10))
    rm1 = build_graph(env, 300, 2.0, x0, goal, workers=1)
    rm8 = build_graph(env, 300, 2.0, x0, goal, workers=8)
    assert rm1.nodes == rm8.nodes and rm1.neighbors == rm8.neighbors
    for u, v, c in rm1.directed_edges():
        assert u != v and c < rm1.r_n
        assert (u, c) in rm1.neighbors[v]
        assert c == edge_cost(rm1.nodes[u], rm1.nodes[v])


@settings(max_examples=10, deadline=None)
@given(r1=st.floats(0.5, 2.0), dr=st.floats(0.0, 2.0), n1=st.integers(10, 80), dn=st.integers(0, 80))
def test_monotone_in_radius_and_count(r1, dr, n1, dn):
    env = random_env(5)
    x0 = PlannerState((0.2, 0.2, 0.2))
    goal = Box((0, 0, 0), (10, 10, 10))  # every node is a goal node; no fallback
    small = build_graph(env, n1, r1, x0, goal)
    wide = build_graph(env, n1, r1 + dr, x0, goal)
    assert set(small.directed_edges()) <= set(wide.directed_edges())
    more = build_graph(env, n1 + dn, r1, x0, goal)
    assert more.nodes[: len(small.nodes)] == small.nodes
