"""Closed-loop Monte Carlo simulation of a VIO-localized, LQR-tracked vehicle.

Per axis the vehicle is a double integrator ``p'' = u`` stepped with
semi-implicit Euler. The estimator is a position/velocity Kalman filter
driven by a noisy accelerometer and corrected by position fixes computed
from features visible from the true state. Yaw follows the nominal exactly.

Trials are simulated in vectorized blocks. Every trial draws its noise from
a private stream seeded with ``rng_seed ^ trial`` and only elementwise
operations couple the block, so blocking and worker count never change a
trial's result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_continuous_are

from .environment import Environment, VisibilityParams, visible_counts, wrap_angle
from .errors import NoFeasiblePlan, NonConvergence
from .explore import Plan
from .parallel import pmap

BLOCK = 256

_A = np.array([[0.0, 1.0], [0.0, 0.0]])
_B = np.array([[0.0], [1.0]])


@dataclass(frozen=True)
class VehicleModel:
    dt_sim: float = 0.1
    u_max: tuple[float, float, float] = (10.0, 10.0, 10.0)

    def __post_init__(self):
        object.__setattr__(self, "u_max", tuple(float(u) for u in np.broadcast_to(self.u_max, 3)))
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be positive")
        if not all(u > 0 for u in self.u_max):
            raise ValueError("control limits must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """True sensor noise; the filter uses the same values unless overridden."""

    sigma_imu: float = 0.0
    sigma_vis: float = 0.0
    filter_sigma_imu: float | None = None
    filter_sigma_vis: float | None = None

    def __post_init__(self):
        for name in ("sigma_imu", "sigma_vis", "filter_sigma_imu", "filter_sigma_vis"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def q_imu(self) -> float:
        s = self.sigma_imu if self.filter_sigma_imu is None else self.filter_sigma_imu
        return s * s

    @property
    def r_vis(self) -> float:
        s = self.sigma_vis if self.filter_sigma_vis is None else self.filter_sigma_vis
        return s * s


@dataclass(frozen=True)
class TrackerGains:
    K: tuple[float, float]
    Q: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    R: float = 1.0

    def closed_loop_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(_A - _B @ np.array([self.K]))


@dataclass(frozen=True)
class VerifyParams:
    trials: int = 1000
    delta_xhat: float = 1.0
    alpha: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.delta_xhat >= 0:
            raise ValueError("delta_xhat must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class TrialResult:
    max_loc_error: float
    max_deviation: float


@dataclass
class Verification:
    p_hat: float
    results: list[TrialResult]
    passed: bool

    @property
    def stderr(self) -> float:
        n = len(self.results)
        return math.sqrt(self.p_hat * (1 - self.p_hat) / n)

    @property
    def loc_errors(self) -> np.ndarray:
        return np.array([r.max_loc_error for r in self.results])

    @property
    def deviations(self) -> np.ndarray:
        return np.array([r.max_deviation for r in self.results])

    def __iter__(self):
        return iter((self.p_hat, self.results, self.passed))


def lqr_gain(Q, R) -> TrackerGains:
    """Continuous-time LQR gain for one double-integrator axis."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 0:
        Q = Q * np.eye(2)
    R = float(np.asarray(R, dtype=float).reshape(-1)[0])
    if Q.shape != (2, 2) or not np.allclose(Q, Q.T):
        raise ValueError("Q must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(Q).min() < -1e-12 or not R > 0:
        raise ValueError("need Q positive semidefinite and R > 0")
    try:
        P = solve_continuous_are(_A, _B, Q, np.array([[R]]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NonConvergence(str(exc)) from exc
    K = (_B.T @ P / R).reshape(2)
    residual = _A.T @ P + P @ _A - P @ _B @ _B.T @ P / R + Q
    if not np.all(np.isfinite(P)) or np.abs(residual).max() > 1e-10 * max(1.0, np.abs(P).max()):
        raise NonConvergence("Riccati residual above tolerance")
    gains = TrackerGains((float(K[0]), float(K[1])), tuple(map(tuple, Q.tolist())), R)
    if not np.all(gains.closed_loop_eigenvalues().real < 0):
        raise NonConvergence("no stabilizing solution (Q not detectable)")
    return gains


@dataclass
class Trajectory:
    """Nominal samples every `dt`; `accelerations[k]` drives step k -> k+1."""

    dt: float
    positions: np.ndarray
    velocities: np.ndarray
    yaws: np.ndarray
    accelerations: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        self.yaws = np.asarray(self.yaws, dtype=float).reshape(-1)
        if self.accelerations is None:
            self.accelerations = np.diff(self.velocities, axis=0) / self.dt
        self.accelerations = np.asarray(self.accelerations, dtype=float).reshape(-1, 3)

    @property
    def steps(self) -> int:
        return len(self.positions) - 1

    @property
    def length(self) -> float:
        d = np.diff(self.positions, axis=0)
        return float(np.sqrt((d * d).sum(axis=1)).sum())


def nominal_trajectory(plan: Plan, roadmap, nominal_speed: float, dt_sim: float) -> Trajectory:
    """Constant-speed resampling of the plan polyline.

    Velocities are backward differences of consecutive samples, so the
    sampled nominal satisfies the discrete dynamics exactly; inside an edge
    they equal the edge tangent times `nominal_speed`. Yaw is interpolated
    the short way round on each edge.
    """
    nodes = plan.nodes
    P = np.array([roadmap.nodes[v].position for v in nodes], dtype=float)
    Y = np.array([roadmap.nodes[v].yaw for v in nodes], dtype=float)
    if len(nodes) == 1:
        return Trajectory(dt_sim, P, np.zeros((1, 3)), Y)
    seg = np.diff(P, axis=0)
    seg_len = np.sqrt((seg * seg).sum(axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    step_len = nominal_speed * dt_sim
    n_steps = max(0, math.ceil(total / step_len - 1e-9)) if total > 0 else 0
    s = np.minimum(np.arange(n_steps + 1) * step_len, total)
    e = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(seg_len[e] > 0, (s - cum[e]) / seg_len[e], 0.0)
    frac = np.clip(frac, 0.0, 1.0)
    pos = P[e] + frac[:, None] * seg[e]
    yaw = wrap_angle(Y[e] + frac * wrap_angle(Y[e + 1] - Y[e]))
    vel = np.zeros_like(pos)
    if n_steps >= 1:
        vel[1:] = np.diff(pos, axis=0) / dt_sim
        vel[0] = vel[1]
    return Trajectory(dt_sim, pos, vel, yaw)


def trial_noise(seed: int, trial: int, steps: int) -> np.ndarray:
    """Standard normals for one trial: ``[:, 0]`` accelerometer, ``[:, 1]`` fix."""
    rng = np.random.Generator(np.random.PCG64(seed ^ trial))
    return rng.standard_normal((steps, 2, 3))


def translation_fix(feature_positions, relative_measurements) -> np.ndarray:
    """Position from map features and measured relative offsets (yaw known).

    Least-squares translation aligning ``f_i`` with ``x + z_i``:
    ``x = mean(f_i - z_i)``.
    """
    f = np.asarray(feature_positions, dtype=float).reshape(-1, 3)
    z = np.asarray(relative_measurements, dtype=float).reshape(-1, 3)
    return (f - z).mean(axis=0)


def simulate_batch(traj: Trajectory, env: Environment, vp: VisibilityParams, noise: NoiseModel,
                   gains: TrackerGains, vehicle: VehicleModel, xi: np.ndarray,
                   history: bool = False) -> dict:
    """Simulate ``len(xi)`` trials in lockstep.

    `xi` has shape (B, steps, 2, 3). With k features visible, the measured
    offsets are ``f_i - x + sigma_vis * n_i`` and the fix
    ``mean(f_i - z_i) = x - sigma_vis * mean(n_i)``; the mean of k unit
    normals is drawn directly as ``xi[:, k, 1] / sqrt(k)``.
    """
    dt = traj.dt
    N = traj.steps
    B = xi.shape[0]
    k0, k1 = gains.K
    umax = np.asarray(vehicle.u_max)
    q = noise.q_imu
    qd00, qd01, qd11 = q * dt ** 4, q * dt ** 3, q * dt ** 2
    r_unit = noise.r_vis

    p = np.repeat(traj.positions[:1], B, axis=0)
    v = np.repeat(traj.velocities[:1], B, axis=0)
    ph = p.copy()
    vh = v.copy()
    c00 = np.zeros(B)
    c01 = np.zeros(B)
    c11 = np.zeros(B)
    max_loc = np.zeros(B)
    max_dev = np.zeros(B)
    if history:
        err_hist = np.zeros((B, N + 1, 3))
        cov_hist = np.zeros((B, N + 1, 3))
        vis_hist = np.zeros((B, N + 1), dtype=np.int64)

    for k in range(N):
        u = traj.accelerations[k] + k0 * (traj.positions[k] - ph) + k1 * (traj.velocities[k] - vh)
        u = np.clip(u, -umax, umax)
        v = v + u * dt
        p = p + v * dt
        a_meas = u + noise.sigma_imu * xi[:, k, 0, :]
        vh = vh + a_meas * dt
        ph = ph + vh * dt
        c00, c01, c11 = c00 + 2 * dt * c01 + dt * dt * c11 + qd00, c01 + dt * c11 + qd01, c11 + qd11

        nvis = visible_counts(p, np.full(B, traj.yaws[k + 1]), env, vp)
        seen = nvis > 0
        if seen.any():
            kf = np.where(seen, nvis, 1).astype(float)
            fix = p - noise.sigma_vis * xi[:, k, 1, :] / np.sqrt(kf)[:, None]
            r = r_unit / kf
            s = c00 + r
            upd = seen & (s > 0)
            s_safe = np.where(upd, s, 1.0)
            g0 = np.where(upd, c00 / s_safe, 0.0)
            g1 = np.where(upd, c01 / s_safe, 0.0)
            r = np.where(upd, r, 0.0)
            innov = fix - ph
            ph = ph + g0[:, None] * innov
            vh = vh + g1[:, None] * innov
            # Joseph form keeps the covariance symmetric positive semidefinite.
            a = 1.0 - g0
            c00, c01, c11 = (
                a * a * c00 + r * g0 * g0,
                a * (c01 - g1 * c00) + r * g0 * g1,
                g1 * g1 * c00 - 2 * g1 * c01 + c11 + r * g1 * g1,
            )

        e = ph - p
        loc = np.sqrt(e[:, 0] * e[:, 0] + e[:, 1] * e[:, 1] + e[:, 2] * e[:, 2])
        d = traj.positions[k + 1] - p
        dev = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
        max_loc = np.maximum(max_loc, loc)
        max_dev = np.maximum(max_dev, dev)
        if history:
            err_hist[:, k + 1] = e
            cov_hist[:, k + 1] = np.stack([c00, c01, c11], axis=1)
            vis_hist[:, k + 1] = nvis

    out = {"max_loc_error": max_loc, "max_deviation": max_dev}
    if history:
        out.update(errors=err_hist, covariances=cov_hist, visible=vis_hist)
    return out


def simulate_trial(traj: Trajectory, env: Environment, vp: VisibilityParams, noise: NoiseModel,
                   gains: TrackerGains, vehicle: VehicleModel | None = None,
                   rng_stream: tuple[int, int] = (0, 0)) -> TrialResult:
    """One trial; `rng_stream` is ``(seed, trial_index)``."""
    vehicle = vehicle or VehicleModel(dt_sim=traj.dt)
    xi = trial_noise(rng_stream[0], rng_stream[1], traj.steps)[None]
    out = simulate_batch(traj, env, vp, noise, gains, vehicle, xi)
    return TrialResult(float(out["max_loc_error"][0]), float(out["max_deviation"][0]))


def _run_block(args):
    traj, env, vp, noise, gains, vehicle, seed, trials = args
    xi = np.stack([trial_noise(seed, t, traj.steps) for t in trials]) if traj.steps else \
        np.zeros((len(trials), 0, 2, 3))
    out = simulate_batch(traj, env, vp, noise, gains, vehicle, xi)
    return list(zip(out["max_loc_error"].tolist(), out["max_deviation"].tolist()))


def run_trials(traj: Trajectory, env: Environment, vp: VisibilityParams, noise: NoiseModel,
               gains: TrackerGains, vehicle: VehicleModel, trials: int, seed: int,
               workers: int = 1) -> list[TrialResult]:
    blocks = [range(a, min(a + BLOCK, trials)) for a in range(0, trials, BLOCK)]
    jobs = [(traj, env, vp, noise, gains, vehicle, seed, blk) for blk in blocks]
    return [TrialResult(a, b) for block in pmap(_run_block, jobs, workers) for a, b in block]


def mc_verify(plan: Plan, roadmap, env: Environment, vp: VisibilityParams, noise: NoiseModel,
              gains: TrackerGains, params: VerifyParams, *, nominal_speed: float = 1.0,
              vehicle: VehicleModel | None = None, workers: int = 1) -> Verification:
    """Fraction of trials whose peak localization error reaches `delta_xhat`."""
    vehicle = vehicle or VehicleModel()
    traj = nominal_trajectory(plan, roadmap, nominal_speed, vehicle.dt_sim)
    return verify_trajectory(traj, env, vp, noise, gains, params, vehicle=vehicle, workers=workers)


def verify_trajectory(traj: Trajectory, env: Environment, vp: VisibilityParams, noise: NoiseModel,
                      gains: TrackerGains, params: VerifyParams, *, vehicle: VehicleModel | None = None,
                      workers: int = 1) -> Verification:
    vehicle = vehicle or VehicleModel(dt_sim=traj.dt)
    results = run_trials(traj, env, vp, noise, gains, vehicle, params.trials, params.rng_seed, workers)
    exceed = sum(r.max_loc_error >= params.delta_xhat for r in results)
    p_hat = exceed / len(results)
    return Verification(p_hat, results, p_hat <= params.alpha)


@dataclass
class Refinement:
    plan: Plan
    beta: float
    verification: Verification
    iterations: int
    history: list[tuple[float, float | None, bool]] = field(default_factory=list)

    @property
    def p_hat(self) -> float:
        return self.verification.p_hat


def refine_bound(plan_for_beta: Callable[[float], Plan], verify: Callable[[Plan], Verification],
                 beta_max: float, max_iters: int = 10) -> Refinement:
    """Bisect the heuristic bound for the cheapest Monte Carlo certified plan.

    `plan_for_beta` runs the search at a bound (raising NoFeasiblePlan when
    none exists) and `verify` runs the Monte Carlo check. `history` records
    ``(beta, cost or None, passed)`` for every evaluation.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    history = []

    def evaluate(beta):
        try:
            plan = plan_for_beta(beta)
        except NoFeasiblePlan:
            history.append((beta, None, False))
            return None, None
        result = verify(plan)
        history.append((beta, plan.cost, result.passed))
        return plan, result

    plan, result = evaluate(beta_max)
    if result is not None and result.passed:
        return Refinement(plan, beta_max, result, 0, history)
    best_plan, best = evaluate(0.0)
    if best is None:
        raise NoFeasiblePlan("no plan satisfies beta = 0")
    if not best.passed:
        raise NoFeasiblePlan(f"the beta = 0 plan fails verification (p_hat = {best.p_hat:.4f})")
    lo, hi = 0.0, beta_max
    iterations = 0
    while iterations < max_iters:
        iterations += 1
        mid = 0.5 * (lo + hi)
        plan, result = evaluate(mid)
        if result is not None and result.passed:
            lo = mid
            best_plan, best = plan, result
        else:
            hi = mid
    return Refinement(best_plan, lo, best, iterations, history)
