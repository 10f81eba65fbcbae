import numpy as np
import pytest

from src.func.errors import ConfigError, Diverged, InputError
from src.func.systems import (
    CostSpec,
    History,
    Plant,
    get_plant,
    lift,
    polynomial_psi,
    rollout_cost,
    simulate,
    step,
)


def test_polynomial_step(poly_plant):
    assert np.allclose(step(poly_plant, [1.0, 1.0, 1.0], [0.0, 0.0]), [0.7, 0.9, 0.8])
    assert np.allclose(step(poly_plant, [0.0, 0.0, 0.0], [1.0, -1.0]), [0.0, 1.0, -1.0])

    with pytest.raises(InputError):
        step(poly_plant, [1.0, 1.0], [0.0, 0.0])


def test_lift():
    lifted = lift(polynomial_psi, [2.0, 0.0, 0.0])
    assert np.allclose(lifted, [2.0, 0.0, 0.0, 4.0, 8.0, 32.0])


def test_simulate(poly_plant):
    inputs = np.ones((5, 2))
    trajectory = simulate(poly_plant, np.zeros(3), inputs, record_states=True)

    assert trajectory.inputs.shape == (5, 2)
    assert trajectory.outputs.shape == (5, 3)
    assert trajectory.states.shape == (5, 3)
    assert len(trajectory) == 5
    # y = x on this plant
    assert np.array_equal(trajectory.outputs, trajectory.states)
    assert np.allclose(trajectory.outputs[1], [0.0, 1.0, 1.0])

    assert simulate(poly_plant, np.zeros(3), inputs).states is None


def test_simulate_diverges():
    plant = get_plant("lti_generic", A=[[2.0]], B=[[1.0]], C=[[1.0]])

    with pytest.raises(Diverged) as e:
        simulate(plant, [1.0], np.zeros((100, 1)))
    assert 0 < e.value.step < 100


def test_simulate_state_noise(scalar_plant):
    noise = np.full((3, 1), 0.1)
    trajectory = simulate(scalar_plant, [0.0], np.zeros((3, 1)), state_noise=noise)

    assert np.allclose(trajectory.outputs[:, 0], [0.0, 0.1, 0.15])


def test_rollout_cost_open_loop(scalar_plant, scalar_cost):
    result = rollout_cost(
        scalar_plant, [1.0], lambda history: np.zeros(1), scalar_cost, horizon=1000
    )

    # sum of 0.25^t
    assert result.value == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert result.converged
    assert result.steps < 1000

    truncated = rollout_cost(
        scalar_plant, [1.0], lambda history: np.zeros(1), scalar_cost, horizon=2
    )
    assert truncated.value == pytest.approx(1.25)
    assert not truncated.converged


def test_rollout_history(poly_plant, poly_cost):
    seen = []

    def controller(history: History) -> np.ndarray:
        seen.append((len(history.inputs), len(history.outputs), history.state.copy()))
        return np.zeros(2)

    rollout_cost(poly_plant, [0.5, 0.0, 0.0], controller, poly_cost, horizon=3)

    assert [s[:2] for s in seen] == [(0, 1), (1, 2), (2, 3)]
    assert np.allclose(seen[1][2], [0.35, 0.125 - 0.25, 0.03125])


def test_cost_spec():
    cost = CostSpec(Q=np.eye(2), R=np.eye(1) * 2.0)
    assert cost.q_bar.shape == (3, 3)
    assert cost.stage(np.array([1.0, 1.0]), np.array([1.0])) == pytest.approx(4.0)

    with pytest.raises(InputError):
        CostSpec(Q=np.diag([1.0, 0.0]), R=np.eye(1))
    with pytest.raises(InputError):
        CostSpec(Q=np.array([[1.0, 0.5], [0.0, 1.0]]), R=np.eye(1))


def test_plant_requires_equilibrium():
    with pytest.raises(InputError):
        Plant(
            name="shifted",
            n=1,
            m=1,
            p=1,
            step_map=lambda x, u: x + 1.0,
            output_map=lambda x: x,
        )


def test_get_plant():
    assert get_plant("paper_sec4").n == 3
    scalar = get_plant("scalar_stable")
    assert (scalar.n, scalar.m, scalar.p) == (1, 1, 1)

    with pytest.raises(ConfigError):
        get_plant("missing")
    with pytest.raises(ConfigError):
        get_plant("lti_generic", A=[[0.5]])
