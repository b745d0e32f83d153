"""Closed-loop trials: plan, act, infer, repeat until success or timeout.

A trial couples the sampling-based planner to the true plant (simulated with
the ground-truth parameters) and, for the adaptive variant, advances the
particle set after every applied control using the gap posterior of the most
recent plan. Batches fan trials over seeds and reduce them to the summary
statistics the benchmark tables are built from.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .controllers import (
    ControllerSpec,
    MppiConfig,
    SolverFailureError,
    build_objective,
    mppi_solve,
    nominal_parameters,
    shift_warm_start,
)
from .costs import CostSpec, rollout_cost_batch, trajectory_cost
from .dynamics import EnvModel, horizon_steps, rk4_step
from .inference import (
    ParticleSet,
    PosteriorModel,
    SvgdConfig,
    draw_particles,
    ksd_estimate,
    particle_mean,
    svgd_step,
)
from .track import LapProgress, StadiumTrack

__all__ = [
    "CartpoleSuccess",
    "RocketSuccess",
    "RaceSuccess",
    "TrialConfig",
    "TrialResult",
    "BatchResult",
    "check_success",
    "run_trial",
    "run_batch",
]


@dataclass(frozen=True)
class CartpoleSuccess:
    """Upright within angle_tol and slower than rate_tol, held continuously."""

    angle_tol: float = 0.2
    rate_tol: float = 1.0
    hold_duration: float = 0.5

    def satisfied(self, state) -> bool:
        err = (state[1] - math.pi + math.pi) % (2.0 * math.pi) - math.pi
        return abs(err) < self.angle_tol and abs(state[3]) < self.rate_tol


@dataclass(frozen=True)
class RocketSuccess:
    """Inside the pad box, upright, and nearly at rest, all at once."""

    x_target: float = 0.5
    y_target: float = 0.0
    x_tol: float = 0.1
    y_tol: float = 0.05
    angle_tol: float = 0.15
    speed_tol: float = 0.2

    def satisfied(self, state) -> bool:
        speed = math.hypot(state[3], state[4])
        return (
            abs(state[0] - self.x_target) < self.x_tol
            and abs(state[1] - self.y_target) < self.y_tol
            and abs(state[2]) < self.angle_tol
            and speed < self.speed_tol
        )


@dataclass(frozen=True)
class RaceSuccess:
    """Unwrapped lap fraction reaches the target number of laps."""

    laps: float = 1.0


def check_success(criterion, times, states, progress=None) -> bool:
    """Evaluate a success criterion on the trailing window of a trial history.

    ``times`` and ``states`` are the full histories so far (initial state
    included); ``progress`` carries unwrapped lap fractions for the racing
    criterion and is ignored otherwise.
    """
    if len(states) == 0:
        return False
    if isinstance(criterion, RaceSuccess):
        return progress is not None and len(progress) > 0 and progress[-1] >= criterion.laps
    if isinstance(criterion, RocketSuccess):
        return criterion.satisfied(states[-1])
    if isinstance(criterion, CartpoleSuccess):
        i = len(states) - 1
        while i >= 0 and criterion.satisfied(states[i]):
            i -= 1
        if i == len(states) - 1:
            return False
        span = times[-1] - times[i + 1]
        return span >= criterion.hold_duration - 1e-9
    raise TypeError(f"unknown success criterion type {type(criterion).__name__}")


@dataclass
class TrialConfig:
    """Everything one closed-loop trial needs, plus its seed."""

    env: EnvModel
    cost: CostSpec
    controller: ControllerSpec
    svgd: SvgdConfig
    mppi: MppiConfig
    success: object
    x0: np.ndarray
    seed: int = 0
    n_particles: int = 5
    duration: float = 40.0
    horizon_seconds: float = 0.4
    track: StadiumTrack | None = None
    log_ksd: bool = False

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.env.state_dim,):
            raise ValueError(
                f"x0 must have shape ({self.env.state_dim},), got {self.x0.shape}"
            )
        if self.n_particles < 1:
            raise ValueError(f"n_particles must be at least 1, got {self.n_particles}")
        if not self.duration >= 0:
            raise ValueError(f"duration must be nonnegative, got {self.duration}")


@dataclass
class TrialResult:
    """Outcome and full per-step log of one trial.

    Log rows are indexed by executed step: ``states[k]`` is the state the
    k-th control was applied in. ``final_state`` is the state after the last
    step, which the log rows do not contain.
    """

    success: bool
    completion_time: float
    terminal_reason: str
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    particles: np.ndarray
    particle_means: np.ndarray
    final_state: np.ndarray
    final_particles: ParticleSet
    seed: int
    progress: np.ndarray | None = None
    final_progress: float | None = None
    ksd: np.ndarray | None = None
    wall_clock_seconds: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.times)


def _gap_model(spec: CostSpec, env: EnvModel, x0, plan, particles: ParticleSet) -> PosteriorModel:
    """Gap posterior of the most recent plan, anchored at the current mean."""
    reference = particle_mean(particles)
    ref_cost = trajectory_cost(spec, env, x0, plan, reference)

    def gap(theta):
        return trajectory_cost(spec, env, x0, plan, theta) - ref_cost

    def gap_batch(thetas):
        return rollout_cost_batch(spec, env, x0, plan[None], thetas)[0] - ref_cost

    return PosteriorModel(
        gap=gap, lower=env.theta_lower, upper=env.theta_upper, gap_batch=gap_batch
    )


def _calibrated_controller(config: TrialConfig, warm: np.ndarray) -> ControllerSpec:
    """Fill in the risk temperature from the warm-start cost scale if unset."""
    controller = config.controller
    if controller.variant != "dro" or controller.robust.risk_lambda is not None:
        return controller
    nominal = nominal_parameters(controller, config.env)
    scale = abs(trajectory_cost(config.cost, config.env, config.x0, warm, nominal))
    lam = 10.0 * max(scale, 1e-6)
    return replace(controller, robust=replace(controller.robust, risk_lambda=lam))


def run_trial(config: TrialConfig) -> TrialResult:
    """Run one seeded closed-loop trial to success, timeout, or solver failure.

    Deterministic: the particle draw and every planning cycle use random
    streams derived from the seed alone, so identical configs reproduce
    identical results bit for bit.
    """
    started = time.perf_counter()
    env = config.env
    steps_h = horizon_steps(config.horizon_seconds, env.dt)

    rng_init = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    particles = draw_particles(
        env.theta_lower, env.theta_upper, config.n_particles, rng_init
    )
    warm = env.clamp_control(np.zeros((steps_h, env.control_dim)))
    controller = _calibrated_controller(config, warm)
    adaptive = controller.variant == "stein_adaptive"
    kernel_ok = getattr(config.svgd.kernel, "stein_compatible", False)

    racing = isinstance(config.success, RaceSuccess)
    lap = LapProgress(config.track if config.track is not None else StadiumTrack()) if racing else None

    state = config.x0.copy()
    times_hist = [0.0]
    states_hist = [state.copy()]
    progress_hist = [lap.update(state)] if racing else None

    log_t, log_x, log_u, log_c = [], [], [], []
    log_p, log_pm, log_prog, log_ksd = [], [], [], []

    success = False
    completion = config.duration
    reason = "timeout"
    step_index = 0
    t = 0.0

    while True:
        if check_success(config.success, times_hist, states_hist, progress_hist):
            success = True
            completion = t
            reason = "success"
            break
        if t + env.dt > config.duration + 1e-9:
            break

        cycle_rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(1, step_index))
        )
        objective = build_objective(controller, config.cost, env, state, particles)
        try:
            new_plan = mppi_solve(env, state, warm, objective, config.mppi, cycle_rng)
        except SolverFailureError:
            reason = "solver_failure"
            break

        control = env.clamp_control(new_plan[0])
        log_t.append(t)
        log_x.append(state.copy())
        log_u.append(control.copy())
        log_c.append(float(objective(new_plan)))
        log_p.append(particles.particles.copy())
        log_pm.append(particle_mean(particles))
        if racing:
            log_prog.append(progress_hist[-1])

        next_state = rk4_step(env, state, control, env.theta_true)
        if not np.all(np.isfinite(next_state)):
            reason = "solver_failure"
            break

        if adaptive and config.svgd.iterations > 0 and config.svgd.step_size > 0:
            model = _gap_model(config.cost, env, state, new_plan, particles)
            for _ in range(config.svgd.iterations):
                particles = svgd_step(particles, model, config.svgd)
            if config.log_ksd and kernel_ok:
                log_ksd.append(
                    ksd_estimate(particles, model, config.svgd.kernel, config.svgd)
                )

        state = next_state
        step_index += 1
        t = step_index * env.dt
        times_hist.append(t)
        states_hist.append(state.copy())
        if racing:
            progress_hist.append(lap.update(state))
        warm = shift_warm_start(new_plan)

    steps = len(log_t)
    return TrialResult(
        success=success,
        completion_time=float(completion),
        terminal_reason=reason,
        times=np.asarray(log_t, dtype=float),
        states=np.asarray(log_x, dtype=float).reshape(steps, env.state_dim),
        controls=np.asarray(log_u, dtype=float).reshape(steps, env.control_dim),
        costs=np.asarray(log_c, dtype=float),
        particles=np.asarray(log_p, dtype=float).reshape(
            steps, config.n_particles, env.param_dim
        ),
        particle_means=np.asarray(log_pm, dtype=float).reshape(steps, env.param_dim),
        final_state=state.copy(),
        final_particles=particles,
        seed=config.seed,
        progress=np.asarray(log_prog, dtype=float) if racing else None,
        final_progress=float(progress_hist[-1]) if racing else None,
        ksd=np.asarray(log_ksd, dtype=float) if log_ksd else None,
        wall_clock_seconds=time.perf_counter() - started,
    )


@dataclass
class BatchResult:
    """Per-seed outcomes of a batch plus order-independent aggregates."""

    seeds: list[int]
    results: list[TrialResult] = field(repr=False)

    @property
    def successes(self) -> list[bool]:
        return [r.success for r in self.results]

    @property
    def completion_times(self) -> list[float]:
        return [r.completion_time for r in self.results]

    @property
    def success_pct(self) -> float:
        return 100.0 * sum(self.successes) / len(self.results)

    def _success_times_sorted(self) -> list[float]:
        return sorted(r.completion_time for r in self.results if r.success)

    @property
    def mean_time(self) -> float:
        ts = self._success_times_sorted()
        return float(np.mean(ts)) if ts else float("nan")

    @property
    def std_time(self) -> float:
        ts = self._success_times_sorted()
        if not ts:
            return float("nan")
        if len(ts) == 1:
            return 0.0
        return float(np.std(ts, ddof=1))

    @property
    def mean_time_all(self) -> float:
        ts = sorted(self.completion_times)
        return float(np.mean(ts)) if ts else float("nan")

    @property
    def std_time_all(self) -> float:
        ts = sorted(self.completion_times)
        if len(ts) <= 1:
            return 0.0 if ts else float("nan")
        return float(np.std(ts, ddof=1))


def _run_with_seed(payload) -> TrialResult:
    base, seed = payload
    return run_trial(replace(base, seed=int(seed)))


def run_batch(base: TrialConfig, seeds, jobs: int = 1) -> BatchResult:
    """Run one trial per seed, optionally across worker processes.

    Results are keyed and ordered by position in ``seeds`` regardless of
    which worker finished first, so aggregates do not depend on ``jobs``.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seed list must not be empty")
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    payloads = [(base, s) for s in seeds]
    if jobs == 1 or len(seeds) == 1:
        results = [_run_with_seed(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_with_seed, payloads))
    return BatchResult(seeds=seeds, results=results)
