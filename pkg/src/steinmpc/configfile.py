"""Declarative experiment files: strict parsing, validation, and hashing.

An experiment document is a YAML mapping with sections env, cost, controller,
svgd, mppi, harness, and batch. Validation is strict: unknown keys anywhere
are rejected with the offending dotted path, so typos fail loudly instead of
silently falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np
import yaml

from .controllers import ControllerSpec, MppiConfig
from .costs import CostSpec, InverseDisplacementReward, RobustObjectiveConfig, UprightEnergyPenalty
from .dynamics import make_cartpole, make_racecar, make_rocket
from .harness import CartpoleSuccess, RaceSuccess, RocketSuccess, TrialConfig
from .inference import SvgdConfig
from .kernels import ConstantKernel, ImqKernel, RbfKernel
from .track import CenterlineReference, StadiumTrack

__all__ = [
    "ConfigError",
    "BatchSettings",
    "parse_config",
    "serialize_config",
    "load_config",
    "config_hash",
    "build_trial_config",
    "resolve_seeds",
]

_ENV_FACTORIES = {
    "cartpole": make_cartpole,
    "rocket2d": make_rocket,
    "racecar": make_racecar,
}


class ConfigError(ValueError):
    """Invalid experiment document; ``field`` is the dotted path at fault."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclasses.dataclass(frozen=True)
class BatchSettings:
    """Seed schedule and parallelism for a batch run."""

    seeds: tuple
    jobs: int = 1


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(section: dict, allowed, path):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")


def _get(section: dict, key: str, path: str, required=False, default=None):
    if key not in section or section[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required value")
        return default
    return section[key]


def _as_float(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_positive(value, path):
    v = _as_float(value, path)
    if not v > 0:
        raise ConfigError(path, f"must be positive, got {v}")
    return v


def _as_nonnegative(value, path):
    v = _as_float(value, path)
    if not v >= 0:
        raise ConfigError(path, f"must be nonnegative, got {v}")
    return v


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _as_float_list(value, path, length=None):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of numbers")
    out = [_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(out)}")
    return out


def _as_weight_matrix(value, path, dim):
    """A flat list is a diagonal; a list of rows is the full matrix."""
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a list (diagonal) or list of rows (matrix)")
    if isinstance(value[0], list):
        if len(value) != dim:
            raise ConfigError(path, f"expected {dim} rows, got {len(value)}")
        rows = [_as_float_list(row, f"{path}[{i}]", dim) for i, row in enumerate(value)]
        return np.asarray(rows)
    return np.diag(_as_float_list(value, path, dim))


def parse_config(text: str) -> dict:
    """Parse YAML text into a plain document without building objects."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"not valid YAML ({exc})") from None
    if doc is None:
        raise ConfigError("<document>", "empty document")
    return _require_mapping(doc, "<document>")


def serialize_config(doc: dict) -> str:
    """Serialize a document so that parsing the result reproduces it."""
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_hash(doc: dict) -> str:
    """Stable content hash of a document, independent of key order."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_env(doc, path="env"):
    section = _require_mapping(_get(doc, "env", "<document>", required=True), path)
    _check_keys(section, {"name", "dt", "control_lower", "control_upper",
                          "theta_true", "theta_lower", "theta_upper"}, path)
    name = _get(section, "name", path, required=True)
    if name not in _ENV_FACTORIES:
        raise ConfigError(f"{path}.name",
                          f"unknown environment {name!r}; expected one of {sorted(_ENV_FACTORIES)}")
    dt = _get(section, "dt", path)
    env = _ENV_FACTORIES[name]() if dt is None else _ENV_FACTORIES[name](dt=_as_positive(dt, f"{path}.dt"))
    overrides = {}
    for key in ("control_lower", "control_upper", "theta_true", "theta_lower", "theta_upper"):
        value = _get(section, key, path)
        if value is not None:
            dim = env.param_dim if key.startswith("theta") else env.control_dim
            overrides[key] = np.asarray(_as_float_list(value, f"{path}.{key}", dim))
    if overrides:
        env = dataclasses.replace(env, **overrides)
    return env


def _build_extra_terminal(section, path):
    if section is None:
        return None
    section = _require_mapping(section, path)
    kind = _get(section, "type", path, required=True)
    if kind == "upright_energy":
        _check_keys(section, {"type", "weight"}, path)
        return UprightEnergyPenalty(_as_nonnegative(_get(section, "weight", path, required=True),
                                                    f"{path}.weight"))
    if kind == "inverse_displacement":
        _check_keys(section, {"type", "weights", "epsilon"}, path)
        weights = _as_float_list(_get(section, "weights", path, required=True), f"{path}.weights")
        epsilon = _get(section, "epsilon", path, default=1e-3)
        return InverseDisplacementReward(weights, epsilon=_as_positive(epsilon, f"{path}.epsilon"))
    raise ConfigError(f"{path}.type", f"unknown terminal term {kind!r}")


def _build_track(section, path):
    if section is None:
        return StadiumTrack()
    section = _require_mapping(section, path)
    _check_keys(section, {"straight_length", "radius", "reference_speed"}, path)
    kwargs = {}
    for key in ("straight_length", "radius", "reference_speed"):
        value = _get(section, key, path)
        if value is not None:
            kwargs[key] = _as_positive(value, f"{path}.{key}")
    return StadiumTrack(**kwargs)


def _build_cost(doc, env, track, path="cost"):
    section = _require_mapping(_get(doc, "cost", "<document>", required=True), path)
    _check_keys(section, {"q", "r", "q_f", "x_des", "extra", "reference"}, path)
    n, m = env.state_dim, env.control_dim
    q = _as_weight_matrix(_get(section, "q", path, required=True), f"{path}.q", n)
    r = _as_weight_matrix(_get(section, "r", path, required=True), f"{path}.r", m)
    q_f = _as_weight_matrix(_get(section, "q_f", path, required=True), f"{path}.q_f", n)
    reference = _get(section, "reference", path)
    x_des_raw = _get(section, "x_des", path)
    if reference is not None:
        if x_des_raw is not None:
            raise ConfigError(f"{path}.x_des", "give either x_des or reference, not both")
        ref_path = f"{path}.reference"
        reference = _require_mapping(reference, ref_path)
        _check_keys(reference, {"type", "speed"}, ref_path)
        kind = _get(reference, "type", ref_path, required=True)
        if kind != "centerline":
            raise ConfigError(f"{ref_path}.type", f"unknown reference {kind!r}")
        speed = _get(reference, "speed", ref_path)
        if speed is not None:
            speed = _as_positive(speed, f"{ref_path}.speed")
            track = dataclasses.replace(track, reference_speed=speed)
        x_des = CenterlineReference(track)
    else:
        if x_des_raw is None:
            raise ConfigError(f"{path}.x_des", "missing required value")
        x_des = np.asarray(_as_float_list(x_des_raw, f"{path}.x_des", n))
    extra = _build_extra_terminal(_get(section, "extra", path), f"{path}.extra")
    try:
        return CostSpec(Q=q, R=r, Q_f=q_f, x_des=x_des, extra_terminal=extra)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _build_controller(doc, env, path="controller"):
    section = _require_mapping(_get(doc, "controller", "<document>", required=True), path)
    _check_keys(section, {"variant", "gamma", "risk_lambda", "risk_epsilon", "nominal_theta"}, path)
    variant = _get(section, "variant", path, required=True)
    gamma = _as_nonnegative(_get(section, "gamma", path, default=0.5), f"{path}.gamma")
    risk_lambda = _get(section, "risk_lambda", path)
    if risk_lambda is not None:
        risk_lambda = _as_positive(risk_lambda, f"{path}.risk_lambda")
    risk_epsilon = _as_nonnegative(_get(section, "risk_epsilon", path, default=0.1),
                                   f"{path}.risk_epsilon")
    nominal = _get(section, "nominal_theta", path)
    if nominal is not None:
        nominal = np.asarray(_as_float_list(nominal, f"{path}.nominal_theta", env.param_dim))
    robust = RobustObjectiveConfig(gamma=gamma, risk_lambda=risk_lambda, risk_epsilon=risk_epsilon)
    try:
        return ControllerSpec(variant=variant, robust=robust, nominal_theta=nominal)
    except ValueError as exc:
        raise ConfigError(f"{path}.variant", str(exc)) from None


_KERNELS = {"rbf", "imq", "constant"}


def _build_kernel(section, path):
    if section is None:
        return RbfKernel()
    section = _require_mapping(section, path)
    kind = _get(section, "type", path, required=True)
    if kind not in _KERNELS:
        raise ConfigError(f"{path}.type", f"unknown kernel {kind!r}; expected one of {sorted(_KERNELS)}")
    if kind == "rbf":
        _check_keys(section, {"type", "bandwidth"}, path)
        bandwidth = _get(section, "bandwidth", path, default=1.0)
        return RbfKernel(bandwidth=_as_positive(bandwidth, f"{path}.bandwidth"))
    if kind == "imq":
        _check_keys(section, {"type", "offset", "decay"}, path)
        offset = _get(section, "offset", path, default=1.0)
        decay = _get(section, "decay", path, default=0.5)
        return ImqKernel(offset=_as_positive(offset, f"{path}.offset"),
                         decay=_as_positive(decay, f"{path}.decay"))
    _check_keys(section, {"type"}, path)
    return ConstantKernel()


def _build_svgd(doc, path="svgd"):
    section = _require_mapping(_get(doc, "svgd", "<document>", required=True), path)
    _check_keys(section, {"step_size", "iterations", "kernel", "fd_epsilon", "sign_mode"}, path)
    step_size = _as_nonnegative(_get(section, "step_size", path, required=True), f"{path}.step_size")
    iterations = _as_int(_get(section, "iterations", path, default=1), f"{path}.iterations", minimum=0)
    fd_epsilon = _as_positive(_get(section, "fd_epsilon", path, default=1e-4), f"{path}.fd_epsilon")
    sign_mode = _get(section, "sign_mode", path, default="adversarial")
    kernel = _build_kernel(_get(section, "kernel", path), f"{path}.kernel")
    try:
        return SvgdConfig(step_size=step_size, iterations=iterations, kernel=kernel,
                          fd_epsilon=fd_epsilon, sign_mode=sign_mode)
    except ValueError as exc:
        raise ConfigError(f"{path}.sign_mode", str(exc)) from None


def _build_mppi(doc, path="mppi"):
    section = _require_mapping(_get(doc, "mppi", "<document>", required=True), path)
    _check_keys(section, {"samples", "temperature", "noise_fraction"}, path)
    noise = _get(section, "noise_fraction", path, required=True)
    if isinstance(noise, list):
        noise = tuple(_as_nonnegative(v, f"{path}.noise_fraction[{i}]")
                      for i, v in enumerate(noise))
        if not noise:
            raise ConfigError(f"{path}.noise_fraction", "list must be nonempty")
    else:
        noise = _as_nonnegative(noise, f"{path}.noise_fraction")
    return MppiConfig(
        samples=_as_int(_get(section, "samples", path, required=True), f"{path}.samples", minimum=1),
        temperature=_as_positive(_get(section, "temperature", path, required=True),
                                 f"{path}.temperature"),
        noise_fraction=noise,
    )


def _build_success(section, env, path):
    defaults = {"cartpole": CartpoleSuccess, "rocket2d": RocketSuccess, "racecar": RaceSuccess}
    cls = defaults[env.name]
    if section is None:
        return cls()
    section = _require_mapping(section, path)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _check_keys(section, set(fields), path)
    kwargs = {}
    for key, value in section.items():
        kwargs[key] = _as_float(value, f"{path}.{key}")
    return cls(**kwargs)


def _build_harness(doc, env, path="harness"):
    section = _require_mapping(_get(doc, "harness", "<document>", required=True), path)
    _check_keys(section, {"duration", "horizon_seconds", "n_particles", "x0",
                          "success", "track", "log_ksd"}, path)
    duration = _as_positive(_get(section, "duration", path, required=True), f"{path}.duration")
    horizon = _as_positive(_get(section, "horizon_seconds", path, required=True),
                           f"{path}.horizon_seconds")
    n_particles = _as_int(_get(section, "n_particles", path, default=5),
                          f"{path}.n_particles", minimum=1)
    x0 = np.asarray(_as_float_list(_get(section, "x0", path, required=True),
                                   f"{path}.x0", env.state_dim))
    log_ksd = _get(section, "log_ksd", path, default=False)
    if not isinstance(log_ksd, bool):
        raise ConfigError(f"{path}.log_ksd", f"expected true or false, got {log_ksd!r}")
    track = _build_track(_get(section, "track", path), f"{path}.track") if env.name == "racecar" else None
    if env.name != "racecar" and _get(section, "track", path) is not None:
        raise ConfigError(f"{path}.track", "only meaningful for the racecar environment")
    success = _build_success(_get(section, "success", path), env, f"{path}.success")
    return duration, horizon, n_particles, x0, success, track, log_ksd


def _build_batch(doc, path="batch"):
    section = _get(doc, "batch", "<document>")
    if section is None:
        return BatchSettings(seeds=(0,), jobs=1)
    section = _require_mapping(section, path)
    _check_keys(section, {"seeds", "base_seed", "jobs"}, path)
    seeds = _get(section, "seeds", path, default=1)
    base = _as_int(_get(section, "base_seed", path, default=0), f"{path}.base_seed")
    if isinstance(seeds, list):
        seeds = tuple(_as_int(s, f"{path}.seeds[{i}]") for i, s in enumerate(seeds))
        if not seeds:
            raise ConfigError(f"{path}.seeds", "seed list must be nonempty")
    else:
        count = _as_int(seeds, f"{path}.seeds", minimum=1)
        seeds = tuple(range(base, base + count))
    jobs = _as_int(_get(section, "jobs", path, default=1), f"{path}.jobs", minimum=1)
    return BatchSettings(seeds=seeds, jobs=jobs)


_SECTIONS = {"env", "cost", "controller", "svgd", "mppi", "harness", "batch"}


def build_trial_config(doc: dict, seed: int | None = None):
    """Materialize a document into a TrialConfig plus batch settings.

    Returns (TrialConfig, BatchSettings); ``seed`` overrides the first batch
    seed when given.
    """
    _check_keys(_require_mapping(doc, "<document>"), _SECTIONS, "<document>")
    env = _build_env(doc)
    batch = _build_batch(doc)
    duration, horizon, n_particles, x0, success, track, log_ksd = _build_harness(doc, env)
    cost = _build_cost(doc, env, track if track is not None else StadiumTrack())
    controller = _build_controller(doc, env)
    svgd = _build_svgd(doc)
    mppi = _build_mppi(doc)
    try:
        trial = TrialConfig(
            env=env,
            cost=cost,
            controller=controller,
            svgd=svgd,
            mppi=mppi,
            success=success,
            x0=x0,
            seed=batch.seeds[0] if seed is None else int(seed),
            n_particles=n_particles,
            duration=duration,
            horizon_seconds=horizon,
            track=track,
            log_ksd=log_ksd,
        )
    except ValueError as exc:
        raise ConfigError("harness", str(exc)) from None
    return trial, batch


def resolve_seeds(batch: BatchSettings, count: int | None) -> tuple:
    """Seed list for a batch run; ``count`` rebases to range(base, base+count)."""
    if count is None:
        return batch.seeds
    if count < 1:
        raise ConfigError("batch.seeds", f"seed count must be >= 1, got {count}")
    base = batch.seeds[0]
    return tuple(range(base, base + count))
