import asyncio
from unittest.mock import Mock

import numpy as np
import pytest

from src.func.evaluate import (
    EvaluationRecord,
    average_error,
    create_rollout_task,
    evaluate_controllers,
    evaluate_one,
    evaluate_slice,
    get_sliced_iterator,
    initial_states,
    relative_error,
    table_text,
)
from src.func.oracle import lifted_model, optimal_gain, state_feedback_controller
from src.func.qlearn import Policy, online_controller


def test_get_sliced_iterator():
    slices = list(get_sliced_iterator(range(10), 3))

    assert slices == [(0, 1, 2), (3, 4, 5), (6, 7, 8), (9,)]
    assert list(get_sliced_iterator(None, 3)) == []
    assert list(get_sliced_iterator(range(10), 0)) == []


def test_initial_states():
    states = initial_states(seed=42, count=100, n=3, low=-1.0, high=1.0)

    assert states.shape == (100, 3)
    assert np.all(np.abs(states) < 1.0)
    assert np.array_equal(states, initial_states(42, 100, 3, -1.0, 1.0))
    assert not np.array_equal(states, initial_states(43, 100, 3, -1.0, 1.0))


def test_relative_error():
    assert relative_error(2.0, 1.0) == 1.0
    assert relative_error(0.5, 1.0) == 0.5
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 0.0) == float("inf")


def test_record_as_dict():
    record = EvaluationRecord(
        index=0,
        x0=np.zeros(2),
        learned_cost=1.0,
        optimal_cost=0.0,
        relative_error=float("inf"),
        converged=True,
    )

    payload = record.as_dict()
    assert payload["relative_error"] is None
    assert payload["x0"] == [0.0, 0.0]
    assert average_error([record]) == float("inf")


def test_table_text():
    text = table_text(10, 1.0127e-16, 2.012e-3)
    lines = text.splitlines()

    assert len(lines) == 3
    assert "# iter" in lines[0] and "avg. cost error" in lines[0]
    assert lines[2].startswith("QL")
    assert "1.0127e-16" in lines[2]
    assert "2.012e-03" in lines[2]


def _scalar_oracle_factory(scalar_cost):
    model = lifted_model("scalar_stable")
    solution = optimal_gain(model, scalar_cost)
    return lambda: state_feedback_controller(model, solution, np.zeros((1, 1)))


def test_evaluate_one_self_comparison(scalar_plant, scalar_cost):
    factory = _scalar_oracle_factory(scalar_cost)

    record = evaluate_one(
        index=3,
        plant=scalar_plant,
        x0=np.array([0.7]),
        learned_factory=factory,
        optimal_factory=factory,
        cost=scalar_cost,
        horizon=1000,
        tail_tol=1e-14,
    )

    assert record.index == 3
    assert record.relative_error <= 1e-12
    assert record.converged


@pytest.mark.asyncio
async def test_create_rollout_task(scalar_plant, scalar_cost):
    factory = _scalar_oracle_factory(scalar_cost)
    logger = Mock()

    task = create_rollout_task(
        logger,
        slice_index=0,
        index=0,
        x0=np.array([0.5]),
        plant=scalar_plant,
        learned_factory=factory,
        optimal_factory=factory,
        cost=scalar_cost,
        horizon=100,
        tail_tol=1e-14,
    )

    assert isinstance(task, asyncio.Task)
    assert isinstance(await task, EvaluationRecord)
    logger.debug.assert_called_once()


@pytest.mark.asyncio
async def test_evaluate_slice_keeps_order(scalar_plant, scalar_cost):
    factory = _scalar_oracle_factory(scalar_cost)
    items = [(i, np.array([0.1 * i])) for i in range(5)]

    records = await evaluate_slice(
        Mock(),
        0,
        items,
        plant=scalar_plant,
        learned_factory=factory,
        optimal_factory=factory,
        cost=scalar_cost,
        horizon=100,
        tail_tol=1e-14,
    )

    assert [record.index for record in records] == list(range(5))


@pytest.mark.asyncio
async def test_evaluate_controllers_order_and_open_loop(scalar_plant, scalar_cost):
    optimal = _scalar_oracle_factory(scalar_cost)
    open_loop = lambda: (lambda history: np.zeros(1))  # noqa: E731
    states = initial_states(0, 7, 1, -1.0, 1.0)

    records = await evaluate_controllers(
        Mock(),
        plant=scalar_plant,
        states=states,
        learned_factory=open_loop,
        optimal_factory=optimal,
        cost=scalar_cost,
        horizon=1000,
        tail_tol=1e-14,
        concurrent_tasks=3,
    )

    assert [record.index for record in records] == list(range(7))
    assert np.array_equal(np.array([r.x0 for r in records]), states)
    assert all(record.relative_error > 0 for record in records)


@pytest.mark.asyncio
async def test_poly_learned_controller_matches_optimal(
    poly_outcome, poly_plant, poly_cost, poly_model, poly_solution
):
    emap = poly_outcome.emap
    warmup = np.zeros((emap.ell, emap.m))
    learned = poly_outcome.result.final_policy
    states = initial_states(42, 100, 3, -1.0, 1.0)

    def optimal_factory():
        return state_feedback_controller(poly_model, poly_solution, warmup)

    records = await evaluate_controllers(
        Mock(),
        plant=poly_plant,
        states=states,
        learned_factory=lambda: online_controller(learned, emap, warmup),
        optimal_factory=optimal_factory,
        cost=poly_cost,
        horizon=1000,
        tail_tol=1e-14,
    )
    assert average_error(records) <= 1e-8

    zero = Policy(K=np.zeros_like(learned.K))
    open_loop = await evaluate_controllers(
        Mock(),
        plant=poly_plant,
        states=states[:10],
        learned_factory=lambda: online_controller(zero, emap, warmup),
        optimal_factory=optimal_factory,
        cost=poly_cost,
        horizon=1000,
        tail_tol=1e-14,
    )
    assert average_error(open_loop) > 0
    assert average_error(open_loop) > average_error(records[:10])
