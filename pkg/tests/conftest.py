from unittest.mock import Mock

import numpy as np
import pytest

from src.func.datastore import collect_dataset, uniform_law
from src.func.job import learn_from_dataset
from src.func.oracle import lifted_model, optimal_gain
from src.func.runconfig import RunConfig
from src.func.systems import CostSpec, get_plant, polynomial_plant, scalar_stable_plant


@pytest.fixture(scope="session")
def poly_config():
    return RunConfig()


@pytest.fixture(scope="session")
def poly_plant():
    return polynomial_plant()


@pytest.fixture(scope="session")
def poly_cost():
    return CostSpec(Q=np.eye(3), R=np.eye(2))


@pytest.fixture(scope="session")
def poly_dataset(poly_plant, poly_config):
    return collect_dataset(
        Mock(),
        poly_plant,
        nu=poly_config.trajectories(poly_plant.m),
        ell=poly_config.window,
        input_law=uniform_law(-1.0, 1.0, poly_plant.m),
        x0_law=uniform_law(-1.0, 1.0, poly_plant.n),
        seed=42,
    )


@pytest.fixture(scope="session")
def poly_outcome(poly_config, poly_dataset, poly_cost):
    return learn_from_dataset(Mock(), poly_config, poly_dataset, poly_cost)


@pytest.fixture(scope="session")
def poly_model():
    return lifted_model("paper_sec4")


@pytest.fixture(scope="session")
def poly_solution(poly_model, poly_cost):
    return optimal_gain(poly_model, poly_cost)


@pytest.fixture(scope="session")
def scalar_plant():
    return scalar_stable_plant()


@pytest.fixture(scope="session")
def scalar_dataset(scalar_plant):
    return collect_dataset(
        Mock(),
        scalar_plant,
        nu=6,
        ell=1,
        input_law=uniform_law(-1.0, 1.0, 1),
        x0_law=uniform_law(-1.0, 1.0, 1),
        seed=0,
    )


@pytest.fixture(scope="session")
def scalar_cost():
    return CostSpec(Q=np.eye(1), R=np.eye(1))


def random_lti(seed: int, n: int = 2, m: int = 1, p: int = 1, radius: float = 0.8):
    """Seeded Schur-stable LTI plant with its matrices"""

    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= radius / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    return get_plant("lti_generic", A=A, B=B, C=C), A, B, C


@pytest.fixture(scope="session")
def lti_factory():
    return random_lti
