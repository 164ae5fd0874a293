import math

import numpy as np
import pytest

from percplan.environment import Box, Environment, PlannerState, VisibilityParams
from percplan.errors import NoFeasiblePlan
from percplan.explore import Plan
from percplan.montecarlo import (NoiseModel, TrialResult, VehicleModel, Verification, VerifyParams,
                                 lqr_gain, mc_verify, nominal_trajectory, refine_bound, run_trials,
                                 simulate_batch, simulate_trial, translation_fix, trial_noise,
                                 verify_trajectory)
from percplan.roadmap import Roadmap

from oracles import exceedance_probability

BIG = Box((-100, -100, -100), (100, 100, 100))
OPEN = Environment(BIG)
VP = VisibilityParams(math.pi / 4, 50.0)
K1 = lqr_gain(np.eye(2), 1.0)


def line_roadmap(points, yaws=None):
    yaws = yaws or [0.0] * len(points)
    nodes = [PlannerState(p, y) for p, y in zip(points, yaws)]
    n = len(nodes)
    nbrs = [[] for _ in range(n)]
    for i in range(n - 1):
        c = float(np.linalg.norm(np.subtract(points[i + 1], points[i])))
        nbrs[i].append((i + 1, c))
        nbrs[i + 1].append((i, c))
    return Roadmap(nodes, nbrs, 10.0, n, (n - 1,))


def line_plan(rm):
    n = len(rm.nodes)
    cost = sum(c for i in range(n - 1) for j, c in rm.neighbors[i] if j == i + 1)
    return Plan(n - 1, tuple(range(n - 1)), cost, 0.0)


def straight(length=2.0, dt=0.05, speed=1.0):
    rm = line_roadmap([(0, 0, 0), (length, 0, 0)])
    return nominal_trajectory(line_plan(rm), rm, speed, dt)


# LQR ---------------------------------------------------------------------

def closed_form_gain(q1, q2, r):
    # Double integrator with Q = diag(q1, q2): K = [sqrt(q1/r), sqrt(q2/r + 2 sqrt(q1/r))].
    k0 = math.sqrt(q1 / r)
    return k0, math.sqrt(q2 / r + 2 * k0)


@pytest.mark.parametrize("q1,q2,r", [(1, 1, 1), (4, 4, 1), (2, 0.5, 3), (10, 0, 0.1)])
def test_lqr_closed_form(q1, q2, r):
    g = lqr_gain(np.diag([q1, q2]), r)
    assert g.K == pytest.approx(closed_form_gain(q1, q2, r), rel=1e-9)
    assert np.all(g.closed_loop_eigenvalues().real < 0)


def test_lqr_examples():
    assert K1.K == pytest.approx((1.0, math.sqrt(3.0)), rel=1e-12)
    assert lqr_gain(4 * np.eye(2), 1.0).K == pytest.approx((2.0, math.sqrt(8.0)), rel=1e-12)


def test_lqr_rejects_bad_weights():
    with pytest.raises(ValueError):
        lqr_gain(-np.eye(2), 1.0)
    with pytest.raises(ValueError):
        lqr_gain(np.eye(2), 0.0)


# Nominal trajectory ------------------------------------------------------

def test_single_edge_samples():
    traj = straight(1.0, dt=0.1)
    assert len(traj.positions) == 11
    assert np.diff(traj.positions[:, 0]) == pytest.approx([0.1] * 10)
    assert traj.velocities == pytest.approx(np.tile([1.0, 0, 0], (11, 1)))


def test_zero_length_plan():
    rm = line_roadmap([(1, 2, 3)])
    traj = nominal_trajectory(Plan(0, (), 0.0, 0.0), rm, 1.0, 0.1)
    assert traj.steps == 0 and traj.positions.tolist() == [[1, 2, 3]]


def test_polyline_length_and_feasibility():
    pts = [(0, 0, 0), (1.3, 0, 0), (1.3, 2.05, 0.4), (0.2, 2.5, 1.0)]
    rm = line_roadmap(pts, [0.0, 1.0, 3.0, -3.0])
    plan = line_plan(rm)
    traj = nominal_trajectory(plan, rm, 1.5, 0.05)
    assert abs(traj.length - plan.cost) <= 0.05 * 1.5
    assert traj.positions[-1] == pytest.approx(pts[-1])
    # Backward-difference velocities make the samples satisfy the discrete dynamics.
    v = traj.velocities[:-1] + traj.accelerations * traj.dt
    assert traj.positions[1:] == pytest.approx(traj.positions[:-1] + v * traj.dt, abs=1e-12)


# Single trials -----------------------------------------------------------

def test_zero_noise_is_exact():
    traj = straight(3.0)
    r = simulate_trial(traj, OPEN, VP, NoiseModel(0.0, 0.0), K1, VehicleModel(0.05), (0, 0))
    assert r.max_loc_error == 0.0
    assert r.max_deviation <= 1e-9


def test_tracking_sanity_with_perfect_localization():
    traj = straight(5.0)
    r = simulate_trial(traj, OPEN, VP, NoiseModel(0.0, 0.0), lqr_gain(4 * np.eye(2), 1.0),
                       VehicleModel(0.05), (3, 4))
    assert r.max_deviation <= 1e-6


def test_exact_fix_with_one_feature():
    traj = straight(3.0)
    env = Environment(BIG, [], np.array([[20.0, 0.0, 0.0]]))
    r = simulate_trial(traj, env, VP, NoiseModel(0.5, 0.0), K1, VehicleModel(0.05), (1, 2))
    assert r.max_loc_error <= 1e-12


def test_translation_fix():
    f = np.array([[1.0, 2.0, 3.0], [4.0, 0.0, 1.0]])
    x = np.array([0.5, -1.0, 2.0])
    assert translation_fix(f, f - x) == pytest.approx(x)


def test_trial_noise_streams():
    a = trial_noise(5, 3, 10)
    assert a.shape == (10, 2, 3)
    assert np.array_equal(a, trial_noise(5, 3, 10))
    assert not np.array_equal(a, trial_noise(5, 4, 10))
    # Streams depend only on seed ^ trial.
    assert np.array_equal(trial_noise(6, 1, 4), trial_noise(7, 0, 4))


def test_covariance_stays_psd():
    traj = straight(6.0)
    rng = np.random.default_rng(0)
    env = Environment(BIG, [Box((2, 1, -1), (3, 2, 1))], rng.uniform(-2, 10, (30, 3)))
    xi = np.stack([trial_noise(1, t, traj.steps) for t in range(20)])
    out = simulate_batch(traj, env, VisibilityParams(math.pi / 3, 6.0), NoiseModel(0.4, 0.1), K1,
                         VehicleModel(0.05), xi, history=True)
    c00, c01, c11 = np.moveaxis(out["covariances"], -1, 0)
    assert (c00 >= -1e-9).all() and (c11 >= -1e-9).all()
    assert (c00 * c11 - c01 * c01 >= -1e-9).all()
    assert out["visible"].max() > 0 and (out["visible"] == 0).any()


def test_batch_equals_single_trials():
    traj = straight(2.0)
    env = Environment(BIG, [], np.random.default_rng(2).uniform(-2, 10, (15, 3)))
    noise = NoiseModel(0.3, 0.05)
    res = run_trials(traj, env, VP, noise, K1, VehicleModel(0.05), 12, seed=9)
    for t in (0, 5, 11):
        single = simulate_trial(traj, env, VP, noise, K1, VehicleModel(0.05), (9, t))
        assert res[t] == single


def test_saturation_limits_deviation_growth():
    traj = straight(2.0)
    tight = simulate_trial(traj, OPEN, VP, NoiseModel(2.0, 0.0), K1, VehicleModel(0.05, (0.01,) * 3), (0, 1))
    loose = simulate_trial(traj, OPEN, VP, NoiseModel(2.0, 0.0), K1, VehicleModel(0.05), (0, 1))
    # Localization error does not depend on the control, only on the sensors.
    assert tight.max_loc_error == pytest.approx(loose.max_loc_error, rel=1e-9)


# Statistics --------------------------------------------------------------

def test_imu_only_variance_matches_double_integration():
    dt, sigma, n = 0.05, 0.3, 40
    traj = straight(n * dt, dt=dt)
    assert traj.steps == n
    xi = np.stack([trial_noise(11, t, n) for t in range(10_000)])
    out = simulate_batch(traj, OPEN, VP, NoiseModel(sigma, 0.0), K1, VehicleModel(dt), xi, history=True)
    final = out["errors"][:, -1, :]
    discrete = sigma ** 2 * dt ** 4 * n * (n + 1) * (2 * n + 1) / 6
    continuous = sigma ** 2 * dt * (n * dt) ** 3 / 3  # white noise of intensity sigma^2 dt
    emp = final.var(axis=0).mean()
    assert abs(emp / discrete - 1) < 0.10
    assert abs(emp / continuous - 1) < 0.10


def one_step():
    return straight(0.04, dt=0.05)


def test_imu_only_exceedance_within_three_se():
    traj = one_step()
    assert traj.steps == 1
    params = VerifyParams(10_000, 0.004, 0.5, 7)
    v = verify_trajectory(traj, OPEN, VP, NoiseModel(1.0, 0.0), K1, params, vehicle=VehicleModel(0.05))
    p = exceedance_probability(0.004, 1.0, 0.05)
    se = math.sqrt(p * (1 - p) / params.trials)
    assert abs(v.p_hat - p) <= 3 * se


def test_verify_zero_noise_and_zero_delta():
    rm = line_roadmap([(0, 0, 0), (2, 0, 0)])
    plan = line_plan(rm)
    v = mc_verify(plan, rm, OPEN, VP, NoiseModel(0.0, 0.0), K1, VerifyParams(50, 0.1, 0.05, 0),
                  vehicle=VehicleModel(0.05))
    assert v.p_hat == 0.0 and v.passed
    p_hat, results, passed = mc_verify(plan, rm, OPEN, VP, NoiseModel(0.1, 0.0), K1,
                                       VerifyParams(50, 0.0, 0.5, 0), vehicle=VehicleModel(0.05))
    assert p_hat == 1.0 and not passed and len(results) == 50


def test_verify_worker_invariance():
    rm = line_roadmap([(0, 0, 0), (3, 0, 0), (3, 2, 0)])
    env = Environment(BIG, [], np.random.default_rng(4).uniform(-2, 6, (40, 3)))
    args = (line_plan(rm), rm, env, VP, NoiseModel(0.3, 0.05), K1, VerifyParams(600, 0.05, 0.1, 3))
    a = mc_verify(*args, vehicle=VehicleModel(0.05), workers=1)
    b = mc_verify(*args, vehicle=VehicleModel(0.05), workers=4)
    assert a.results == b.results and a.p_hat == b.p_hat


def test_more_features_do_not_raise_median_error():
    rng = np.random.default_rng(8)
    feats = rng.uniform(-2, 8, (40, 3))
    traj = straight(6.0)
    noise = NoiseModel(0.3, 0.05)
    some = run_trials(traj, Environment(BIG, [], feats[:8]), VisibilityParams(math.pi / 4, 4.0), noise, K1,
                      VehicleModel(0.05), 1000, 21)
    more = run_trials(traj, Environment(BIG, [], feats), VisibilityParams(math.pi / 4, 4.0), noise, K1,
                      VehicleModel(0.05), 1000, 21)
    med = lambda rs: np.median([r.max_loc_error for r in rs])
    assert med(more) <= med(some)


def test_verification_stderr():
    v = Verification(0.25, [TrialResult(0, 0)] * 100, True)
    assert v.stderr == pytest.approx(math.sqrt(0.25 * 0.75 / 100))


def test_verify_params_validation():
    with pytest.raises(ValueError):
        VerifyParams(trials=0)
    with pytest.raises(ValueError):
        VerifyParams(alpha=1.0)


# Refinement ----------------------------------------------------------------

class Synthetic:
    """Plans whose cost falls with beta; MC passes iff beta <= threshold."""

    def __init__(self, threshold, feasible_from=0.0):
        self.threshold = threshold
        self.feasible_from = feasible_from
        self.calls = []

    def plan(self, beta):
        self.calls.append(beta)
        if beta < self.feasible_from:
            raise NoFeasiblePlan("none")
        return Plan(1, (0,), 10.0 - min(beta, 9.0), min(beta, 9.0))

    def verify(self, plan):
        ok = plan.h <= self.threshold
        return Verification(0.0 if ok else 0.5, [], ok)


def test_refine_returns_beta_max_when_it_passes():
    s = Synthetic(threshold=100.0)
    ref = refine_bound(s.plan, s.verify, 5.0)
    assert ref.beta == 5.0 and ref.iterations == 0 and s.calls == [5.0]


def test_refine_fails_when_zero_infeasible():
    s = Synthetic(threshold=-1.0, feasible_from=1.0)
    with pytest.raises(NoFeasiblePlan):
        refine_bound(s.plan, s.verify, 5.0)


def test_refine_fails_when_zero_fails_mc():
    s = Synthetic(threshold=-1.0)
    with pytest.raises(NoFeasiblePlan):
        refine_bound(s.plan, s.verify, 5.0)


@pytest.mark.parametrize("threshold", [0.0, 1.3, 3.3, 7.9])
def test_refine_bisects_to_threshold(threshold):
    s = Synthetic(threshold)
    ref = refine_bound(s.plan, s.verify, 8.0, max_iters=10)
    assert ref.iterations == 10
    assert ref.verification.passed
    assert threshold - 8.0 / 2 ** 10 <= ref.beta <= threshold
    assert ref.plan.cost == 10.0 - ref.beta
    passed = [b for b, _, ok in ref.history if ok]
    assert ref.beta == max(passed)


def test_refine_rejects_zero_iterations():
    s = Synthetic(1.0)
    with pytest.raises(ValueError):
        refine_bound(s.plan, s.verify, 2.0, max_iters=0)
