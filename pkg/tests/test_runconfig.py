import numpy as np
import pytest

from src.config import config
from src.func.errors import ConfigError
from src.func.runconfig import EvalConfig, NoiseConfig, RunConfig, load_run_config


def test_defaults():
    run_config = RunConfig()

    assert run_config.window == 6
    assert run_config.trajectories(2) == 40
    assert run_config.as_dict()["ell"] == 6
    assert run_config.as_dict()["noise"]["sigmas"] == [1e-2, 1e-3, 1e-4]

    plant = run_config.build_plant()
    cost = run_config.build_cost(plant)
    assert np.array_equal(cost.Q, np.eye(3))
    assert np.array_equal(cost.R, np.eye(2))


def test_load_run_config_from_settings():
    run_config = load_run_config(config.get("run"))

    assert run_config == RunConfig()


def test_load_run_config_user_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        "run:\n"
        "  eta_bound: 4\n"
        "  Q: [2.0, 2.0, 2.0]\n"
        "  noise:\n"
        "    gamma_method: svd\n"
        "  eval:\n"
        "    num_initial_conditions: 10\n"
    )

    run_config = load_run_config(dict(seed=1, max_iters=5), str(path), seed=7)

    assert run_config.eta_bound == 4
    assert run_config.window == 4
    assert run_config.seed == 7
    assert run_config.max_iters == 5
    assert run_config.noise == NoiseConfig(gamma_method="svd")
    assert run_config.eval == EvalConfig(num_initial_conditions=10)
    cost = run_config.build_cost(run_config.build_plant())
    assert np.array_equal(cost.Q, 2 * np.eye(3))


def test_load_run_config_top_level_keys(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("nu: 12\nell: 3\n")

    run_config = load_run_config(None, str(path))

    assert run_config.nu == 12
    assert run_config.trajectories(2) == 12
    assert run_config.window == 3


def test_invalid_settings(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(dict(unknown_key=1))
    with pytest.raises(ConfigError):
        load_run_config(None, str(tmp_path / "missing.yaml"))
    with pytest.raises(ConfigError):
        RunConfig(eta_bound=0)
    with pytest.raises(ConfigError):
        RunConfig(nu=-1)
    with pytest.raises(ConfigError):
        RunConfig(noise=NoiseConfig(output_sigma=-1.0))
    with pytest.raises(ConfigError):
        RunConfig(noise=NoiseConfig(gamma_method="qr"))
    with pytest.raises(ConfigError):
        RunConfig(input_range=(1.0, -1.0))


def test_invalid_plant_settings():
    with pytest.raises(ConfigError):
        RunConfig(plant="missing").build_plant()
    with pytest.raises(ConfigError):
        RunConfig(plant="lti_generic").build_plant()

    plant = RunConfig().build_plant()
    with pytest.raises(ConfigError):
        RunConfig(Q=[1.0, -1.0, 1.0]).build_cost(plant)
    with pytest.raises(ConfigError):
        RunConfig(R=[1.0]).build_cost(plant)
