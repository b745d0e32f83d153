"""Sampling-based planner and the four controller variants built on it.

One inner solver serves every variant; variants differ only in the scalar
objective a candidate plan is scored with:

* stein_adaptive: gap-weighted robust objective around the live particle mean.
* emppi: ensemble average over particles frozen at the initial draw.
* dro: soft worst case over frozen particles.
* nominal: plain cost under one fixed parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostSpec, RobustObjectiveConfig, rollout_cost_batch
from .dynamics import EnvModel
from .inference import ParticleSet

__all__ = [
    "MppiConfig",
    "ControllerSpec",
    "SolverFailureError",
    "VARIANTS",
    "mppi_solve",
    "shift_warm_start",
    "build_objective",
    "plan",
    "nominal_parameters",
]

VARIANTS = ("stein_adaptive", "emppi", "dro", "nominal")


class SolverFailureError(RuntimeError):
    """Raised when no candidate plan has a finite objective value."""


@dataclass(frozen=True)
class MppiConfig:
    """Settings for the path-integral inner solver.

    Attributes:
        samples: number of evaluated candidates, including the warm start
            injected at index 0. samples = 1 evaluates the warm plan alone.
        temperature: softness of the exponential weighting over costs.
        noise_fraction: per-channel Gaussian perturbation scale expressed as
            a fraction of the control range (scalar or one value per channel).
    """

    samples: int = 512
    temperature: float = 1.0
    noise_fraction: float | tuple = 0.1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be at least 1, got {self.samples}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if np.any(np.asarray(self.noise_fraction, dtype=float) < 0):
            raise ValueError("noise_fraction must be nonnegative")


def _evaluate(objective, plans: np.ndarray) -> np.ndarray:
    batch = getattr(objective, "evaluate_batch", None)
    if batch is not None:
        return np.asarray(batch(plans), dtype=float)
    return np.array([float(objective(p)) for p in plans], dtype=float)


def mppi_solve(
    env: EnvModel,
    x0,
    warm: np.ndarray,
    objective,
    config: MppiConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Improve a warm-start plan by weighted averaging of sampled candidates.

    Candidates are the clamped warm plan plus samples - 1 Gaussian
    perturbations of it, all clamped to the actuator box. Weights are
    exp(-(cost - best cost) / temperature), with non-finite costs dropped.
    The weighted average is only returned if it scores at least as well as
    the best candidate; otherwise the best candidate is, which makes the
    solver monotone against the warm plan by construction.

    Raises:
        SolverFailureError: if every candidate cost is non-finite.
    """
    warm = np.asarray(warm, dtype=float)
    lo, hi = env.control_lower, env.control_upper
    std = np.asarray(config.noise_fraction, dtype=float) * (hi - lo)
    noise = rng.normal(size=(config.samples - 1,) + warm.shape) * std
    candidates = np.concatenate([warm[None], warm[None] + noise], axis=0)
    np.clip(candidates, lo, hi, out=candidates)

    costs = _evaluate(objective, candidates)
    finite = np.isfinite(costs)
    if not finite.any():
        raise SolverFailureError("no candidate plan produced a finite objective value")
    costs = np.where(finite, costs, np.inf)
    best = int(np.argmin(costs))

    weights = np.exp(-(costs - costs[best]) / config.temperature)
    weights[~finite] = 0.0
    weights /= weights.sum()
    averaged = np.einsum("k,k...->...", weights, candidates)
    np.clip(averaged, lo, hi, out=averaged)

    averaged_cost = float(_evaluate(objective, averaged[None])[0])
    if not np.isfinite(averaged_cost) or averaged_cost > costs[best]:
        return candidates[best].copy()
    return averaged


def shift_warm_start(plan: np.ndarray) -> np.ndarray:
    """Receding-horizon shift: drop the executed first control, repeat the last."""
    plan = np.asarray(plan, dtype=float)
    if plan.ndim != 2 or plan.shape[0] < 1:
        raise ValueError(f"plan must be a (H, m) array with H >= 1, got shape {plan.shape}")
    return np.concatenate([plan[1:], plan[-1:]], axis=0)


@dataclass(frozen=True)
class ControllerSpec:
    """Which variant plans, and with what objective weights.

    ``nominal_theta`` overrides the default nominal parameters (the midpoint
    of the parameter box) for the nominal variant.
    """

    variant: str = "stein_adaptive"
    robust: RobustObjectiveConfig = RobustObjectiveConfig()
    nominal_theta: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.nominal_theta is not None:
            object.__setattr__(
                self, "nominal_theta", np.asarray(self.nominal_theta, dtype=float)
            )


def nominal_parameters(controller: ControllerSpec, env: EnvModel) -> np.ndarray:
    if controller.nominal_theta is not None:
        return controller.nominal_theta
    return 0.5 * (env.theta_lower + env.theta_upper)


class _BatchObjective:
    """Base: a scalar plan objective with a vectorized batch form."""

    def __init__(self, spec: CostSpec, env: EnvModel, x0):
        self.spec = spec
        self.env = env
        self.x0 = np.asarray(x0, dtype=float)

    def __call__(self, plan) -> float:
        return float(self.evaluate_batch(np.asarray(plan, float)[None])[0])


class RobustPlanObjective(_BatchObjective):
    """cost(theta_bar) + gamma * mean gap over the particle stack."""

    def __init__(self, spec, env, x0, particles: np.ndarray, gamma: float):
        super().__init__(spec, env, x0)
        self.particles = np.atleast_2d(np.asarray(particles, dtype=float))
        self.mean = self.particles.mean(axis=0)
        self.gamma = gamma
        self._thetas = np.vstack([self.mean[None], self.particles])

    def evaluate_batch(self, plans) -> np.ndarray:
        costs = rollout_cost_batch(self.spec, self.env, self.x0, plans, self._thetas)
        gaps = costs[:, 1:] - costs[:, :1]
        return costs[:, 0] + self.gamma * gaps.mean(axis=1)


class RiskAversePlanObjective(_BatchObjective):
    """lambda * epsilon + lambda * log mean exp(cost_i / lambda)."""

    def __init__(self, spec, env, x0, particles: np.ndarray, lam: float, epsilon: float):
        super().__init__(spec, env, x0)
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        self.particles = np.atleast_2d(np.asarray(particles, dtype=float))
        self.lam = lam
        self.epsilon = epsilon

    def evaluate_batch(self, plans) -> np.ndarray:
        from scipy.special import logsumexp

        costs = rollout_cost_batch(self.spec, self.env, self.x0, plans, self.particles)
        lse = logsumexp(costs / self.lam, axis=1) - np.log(costs.shape[1])
        return self.lam * self.epsilon + self.lam * lse


class NominalPlanObjective(_BatchObjective):
    """Plain trajectory cost under one parameter vector."""

    def __init__(self, spec, env, x0, theta: np.ndarray):
        super().__init__(spec, env, x0)
        self.theta = np.asarray(theta, dtype=float)

    def evaluate_batch(self, plans) -> np.ndarray:
        return rollout_cost_batch(self.spec, self.env, self.x0, plans, self.theta[None])[:, 0]


def build_objective(
    controller: ControllerSpec,
    spec: CostSpec,
    env: EnvModel,
    x0,
    particles: ParticleSet | np.ndarray,
):
    """Construct the plan objective a variant scores candidates with."""
    mat = particles.particles if isinstance(particles, ParticleSet) else np.atleast_2d(particles)
    cfg = controller.robust
    if controller.variant == "stein_adaptive":
        return RobustPlanObjective(spec, env, x0, mat, cfg.gamma)
    if controller.variant == "emppi":
        return RobustPlanObjective(spec, env, x0, mat, 1.0)
    if controller.variant == "dro":
        if cfg.risk_lambda is None:
            raise ValueError("risk_lambda must be calibrated before building the dro objective")
        return RiskAversePlanObjective(spec, env, x0, mat, cfg.risk_lambda, cfg.risk_epsilon)
    return NominalPlanObjective(spec, env, x0, nominal_parameters(controller, env))


def plan(
    controller: ControllerSpec,
    env: EnvModel,
    cost_spec: CostSpec,
    mppi_config: MppiConfig,
    x0,
    particles: ParticleSet | np.ndarray,
    warm: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """One planning cycle: build the variant's objective, run the solver."""
    objective = build_objective(controller, cost_spec, env, x0, particles)
    return mppi_solve(env, x0, warm, objective, mppi_config, rng)
