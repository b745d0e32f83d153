"""Strict experiment-document parsing and the shipped reference configs."""
import copy
import glob
import os

import numpy as np
import pytest

from steinmpc.configfile import (
    BatchSettings,
    ConfigError,
    build_trial_config,
    config_hash,
    load_config,
    parse_config,
    resolve_seeds,
    serialize_config,
)
from steinmpc.costs import InverseDisplacementReward, UprightEnergyPenalty
from steinmpc.harness import CartpoleSuccess, RaceSuccess
from steinmpc.kernels import ConstantKernel, ImqKernel, RbfKernel
from steinmpc.track import CenterlineReference

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def minimal_doc():
    return {
        "env": {"name": "cartpole"},
        "cost": {
            "q": [1.0, 1.0, 1.0, 1.0],
            "r": [0.1],
            "q_f": [2.0, 2.0, 2.0, 2.0],
            "x_des": [0.0, 3.14159, 0.0, 0.0],
        },
        "controller": {"variant": "nominal"},
        "svgd": {"step_size": 0.001},
        "mppi": {"samples": 8, "temperature": 1.0, "noise_fraction": 0.5},
        "harness": {
            "duration": 1.0,
            "horizon_seconds": 0.2,
            "x0": [0.0, 0.0, 0.0, 0.0],
        },
    }


def error_field(doc):
    with pytest.raises(ConfigError) as err:
        build_trial_config(doc)
    return err.value.field


def test_minimal_document_builds():
    trial, batch = build_trial_config(minimal_doc())
    assert trial.env.name == "cartpole"
    assert trial.controller.variant == "nominal"
    assert trial.n_particles == 5
    assert trial.seed == 0
    assert batch == BatchSettings(seeds=(0,), jobs=1)
    assert isinstance(trial.svgd.kernel, RbfKernel)
    assert isinstance(trial.success, CartpoleSuccess)


def test_unknown_keys_rejected_with_dotted_path():
    doc = minimal_doc()
    doc["bogus"] = 1
    assert error_field(doc) == "<document>.bogus"

    doc = minimal_doc()
    doc["env"]["bogus"] = 1
    assert error_field(doc) == "env.bogus"

    doc = minimal_doc()
    doc["svgd"]["kernel"] = {"type": "rbf", "shininess": 2}
    assert error_field(doc) == "svgd.kernel.shininess"


def test_missing_required_sections_and_values():
    doc = minimal_doc()
    del doc["cost"]
    assert error_field(doc) == "<document>.cost"

    doc = minimal_doc()
    del doc["mppi"]["temperature"]
    assert error_field(doc) == "mppi.temperature"

    doc = minimal_doc()
    del doc["cost"]["x_des"]
    assert error_field(doc) == "cost.x_des"


def test_type_and_range_validation():
    doc = minimal_doc()
    doc["mppi"]["samples"] = 2.5
    assert error_field(doc) == "mppi.samples"

    doc = minimal_doc()
    doc["mppi"]["temperature"] = 0
    assert error_field(doc) == "mppi.temperature"

    doc = minimal_doc()
    doc["harness"]["duration"] = -1
    assert error_field(doc) == "harness.duration"

    doc = minimal_doc()
    doc["svgd"]["step_size"] = "fast"
    assert error_field(doc) == "svgd.step_size"


def test_weight_vector_becomes_diagonal():
    trial, _ = build_trial_config(minimal_doc())
    assert np.array_equal(trial.cost.Q, np.diag([1.0, 1.0, 1.0, 1.0]))


def test_weight_rows_become_full_matrix():
    doc = minimal_doc()
    rows = np.diag([1.0, 2.0, 3.0, 4.0])
    rows[0, 2] = -0.5
    rows[2, 0] = -0.5
    doc["cost"]["q"] = [list(r) for r in rows]
    trial, _ = build_trial_config(doc)
    assert np.array_equal(trial.cost.Q, rows)


def test_weight_matrix_dimension_mismatch():
    doc = minimal_doc()
    doc["cost"]["q"] = [1.0, 1.0]
    assert error_field(doc) == "cost.q"

    doc = minimal_doc()
    doc["cost"]["q"] = [[1.0] * 4] * 3
    assert error_field(doc) == "cost.q"


def test_env_overrides_applied():
    doc = minimal_doc()
    doc["env"]["dt"] = 0.025
    doc["env"]["theta_true"] = [0.4, 0.8]
    trial, _ = build_trial_config(doc)
    assert trial.env.dt == 0.025
    assert np.array_equal(trial.env.theta_true, [0.4, 0.8])


def test_unknown_environment_rejected():
    doc = minimal_doc()
    doc["env"]["name"] = "submarine"
    assert error_field(doc) == "env.name"


def test_extra_terminal_terms():
    doc = minimal_doc()
    doc["cost"]["extra"] = {"type": "upright_energy", "weight": 10.0}
    trial, _ = build_trial_config(doc)
    assert isinstance(trial.cost.extra_terminal, UprightEnergyPenalty)
    assert trial.cost.extra_terminal.weight == 10.0

    doc["cost"]["extra"] = {"type": "magic"}
    assert error_field(doc) == "cost.extra.type"


def racing_doc():
    doc = minimal_doc()
    doc["env"] = {"name": "racecar"}
    doc["cost"] = {
        "q": [1.0] * 5,
        "r": [0.1, 0.1],
        "q_f": [2.0] * 5,
        "reference": {"type": "centerline"},
    }
    doc["harness"] = {
        "duration": 1.0,
        "horizon_seconds": 0.15,
        "x0": [-2.5, -2.0, 0.0, 0.0, 0.0],
        "track": {"reference_speed": 3.0},
    }
    return doc


def test_centerline_reference_shares_harness_track():
    trial, _ = build_trial_config(racing_doc())
    assert isinstance(trial.cost.x_des, CenterlineReference)
    assert trial.track.reference_speed == 3.0
    assert trial.cost.x_des.track is trial.track
    assert isinstance(trial.success, RaceSuccess)


def test_reference_speed_override_beats_track_speed():
    doc = racing_doc()
    doc["cost"]["reference"]["speed"] = 1.5
    trial, _ = build_trial_config(doc)
    assert trial.cost.x_des.track.reference_speed == 1.5
    assert trial.track.reference_speed == 3.0


def test_x_des_and_reference_are_exclusive():
    doc = racing_doc()
    doc["cost"]["x_des"] = [0.0] * 5
    assert error_field(doc) == "cost.x_des"


def test_track_section_rejected_off_the_racetrack():
    doc = minimal_doc()
    doc["harness"]["track"] = {"reference_speed": 2.0}
    assert error_field(doc) == "harness.track"


def test_success_section_overrides_fields():
    doc = minimal_doc()
    doc["harness"]["success"] = {"angle_tol": 0.3, "hold_duration": 1.0}
    trial, _ = build_trial_config(doc)
    assert trial.success == CartpoleSuccess(angle_tol=0.3, rate_tol=1.0,
                                            hold_duration=1.0)

    doc["harness"]["success"] = {"altitude": 1.0}
    assert error_field(doc) == "harness.success.altitude"


def test_kernel_variants_parse():
    doc = minimal_doc()
    doc["svgd"]["kernel"] = {"type": "imq", "offset": 2.0, "decay": 0.25}
    trial, _ = build_trial_config(doc)
    assert trial.svgd.kernel == ImqKernel(offset=2.0, decay=0.25)

    doc["svgd"]["kernel"] = {"type": "constant"}
    trial, _ = build_trial_config(doc)
    assert isinstance(trial.svgd.kernel, ConstantKernel)

    doc["svgd"]["kernel"] = {"type": "rbf", "bandwidth": 0.0}
    assert error_field(doc) == "svgd.kernel.bandwidth"

    doc["svgd"]["kernel"] = {"type": "triangular"}
    assert error_field(doc) == "svgd.kernel.type"


def test_controller_section():
    doc = minimal_doc()
    doc["controller"] = {"variant": "dro", "risk_lambda": 2.0,
                         "risk_epsilon": 0.2}
    trial, _ = build_trial_config(doc)
    assert trial.controller.robust.risk_lambda == 2.0
    assert trial.controller.robust.risk_epsilon == 0.2

    doc["controller"] = {"variant": "psychic"}
    assert error_field(doc) == "controller.variant"

    doc["controller"] = {"variant": "nominal", "nominal_theta": [0.4, 0.9]}
    trial, _ = build_trial_config(doc)
    assert np.array_equal(trial.controller.nominal_theta, [0.4, 0.9])


def test_batch_seed_forms():
    doc = minimal_doc()
    doc["batch"] = {"seeds": 4}
    _, batch = build_trial_config(doc)
    assert batch.seeds == (0, 1, 2, 3)

    doc["batch"] = {"seeds": 3, "base_seed": 10}
    _, batch = build_trial_config(doc)
    assert batch.seeds == (10, 11, 12)

    doc["batch"] = {"seeds": [5, 9, 2]}
    _, batch = build_trial_config(doc)
    assert batch.seeds == (5, 9, 2)

    doc["batch"] = {"seeds": [], "jobs": 2}
    assert error_field(doc) == "batch.seeds"


def test_seed_override_wins():
    doc = minimal_doc()
    doc["batch"] = {"seeds": 4, "base_seed": 7}
    trial, _ = build_trial_config(doc, seed=99)
    assert trial.seed == 99


def test_resolve_seeds():
    batch = BatchSettings(seeds=(3, 4, 5))
    assert resolve_seeds(batch, None) == (3, 4, 5)
    assert resolve_seeds(batch, 2) == (3, 4)
    assert resolve_seeds(batch, 5) == (3, 4, 5, 6, 7)
    with pytest.raises(ConfigError):
        resolve_seeds(batch, 0)


def test_parse_round_trip():
    doc = minimal_doc()
    assert parse_config(serialize_config(doc)) == doc


def test_parse_rejects_bad_documents():
    with pytest.raises(ConfigError):
        parse_config(":\n  - ][")
    with pytest.raises(ConfigError):
        parse_config("")
    with pytest.raises(ConfigError):
        parse_config("- just\n- a\n- list\n")


def test_config_hash_is_order_independent():
    doc = minimal_doc()
    shuffled = {k: doc[k] for k in reversed(list(doc))}
    assert config_hash(doc) == config_hash(shuffled)
    changed = copy.deepcopy(doc)
    changed["mppi"]["samples"] = 9
    assert config_hash(changed) != config_hash(doc)


def test_shipped_reference_configs_build():
    paths = sorted(glob.glob(os.path.join(CONFIG_DIR, "*.yaml")))
    assert len(paths) == 4
    built = {}
    for path in paths:
        trial, batch = build_trial_config(load_config(path))
        built[os.path.basename(path)] = (trial, batch)

    cartpole, cartpole_batch = built["cartpole.yaml"]
    assert cartpole.env.name == "cartpole"
    assert cartpole.controller.variant == "stein_adaptive"
    assert cartpole.controller.robust.gamma == 0.5
    assert cartpole.svgd.step_size == 0.001
    assert cartpole.n_particles == 5
    assert len(cartpole_batch.seeds) == 32

    rocket, rocket_batch = built["rocket.yaml"]
    assert rocket.env.name == "rocket2d"
    assert np.array_equal(rocket.env.theta_true, [0.1, 0.01, 0.7])
    assert rocket.horizon_seconds == 0.15
    assert len(rocket_batch.seeds) == 32

    ablation, ablation_batch = built["kernel_ablation.yaml"]
    assert ablation.env.name == "rocket2d"
    assert len(ablation_batch.seeds) == 20

    racing, racing_batch = built["racing.yaml"]
    assert racing.env.name == "racecar"
    assert racing.env.dt == 0.015
    assert racing.track.reference_speed == 4.5
    assert isinstance(racing.svgd.kernel, ImqKernel)
    assert racing.svgd.sign_mode == "favoring"
    assert racing.svgd.step_size == 0.01
    assert racing.controller.robust.risk_lambda == 0.5
    assert isinstance(racing.cost.extra_terminal, InverseDisplacementReward)
    assert len(racing_batch.seeds) == 16
