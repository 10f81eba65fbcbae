"""
Closed-loop evaluation of a learned controller against the optimal one over
many initial conditions, run as concurrent tasks in slices.
"""
from asyncio import Task, create_task, gather, to_thread
from dataclasses import dataclass
from itertools import islice
from logging import Logger
from time import perf_counter
from typing import Any, Callable, Generator, Iterable, Optional, Sequence

import numpy as np

from src.func.systems import Controller, CostSpec, Plant, rollout_cost

ControllerFactory = Callable[[], Controller]

# stream index separating evaluation draws from data collection draws
EVAL_STREAM = 1


@dataclass(frozen=True)
class EvaluationRecord:
    index: int
    x0: np.ndarray
    learned_cost: float
    optimal_cost: float
    relative_error: float
    converged: bool

    def as_dict(self) -> dict[str, Any]:
        return dict(
            index=self.index,
            x0=self.x0.tolist(),
            learned_cost=self.learned_cost,
            optimal_cost=self.optimal_cost,
            relative_error=finite_or_none(self.relative_error),
            converged=self.converged,
        )


def initial_states(
    seed: int, count: int, n: int, low: float, high: float
) -> np.ndarray:
    """count seeded initial conditions, uniform in (low, high)^n"""

    rng = np.random.default_rng([seed, EVAL_STREAM])
    return rng.uniform(low, high, size=(count, n))


def finite_or_none(value: float) -> Optional[float]:
    """JSON carries no inf or nan; they are written as null"""

    return float(value) if np.isfinite(value) else None


def relative_error(learned: float, optimal: float) -> float:
    if optimal == 0.0:
        return 0.0 if learned == 0.0 else float("inf")
    return abs(learned - optimal) / optimal


def evaluate_one(
    index: int,
    plant: Plant,
    x0: np.ndarray,
    learned_factory: ControllerFactory,
    optimal_factory: ControllerFactory,
    cost: CostSpec,
    horizon: int,
    tail_tol: float,
) -> EvaluationRecord:
    """Rolls out both controllers from x0 and compares their costs"""

    learned = rollout_cost(plant, x0, learned_factory(), cost, horizon, tail_tol)
    optimal = rollout_cost(plant, x0, optimal_factory(), cost, horizon, tail_tol)
    return EvaluationRecord(
        index=index,
        x0=np.asarray(x0, dtype=float),
        learned_cost=learned.value,
        optimal_cost=optimal.value,
        relative_error=relative_error(learned.value, optimal.value),
        converged=learned.converged and optimal.converged,
    )


def get_sliced_iterator(
    items: Iterable[Any], slice_size: int
) -> Generator[tuple[Any, ...], None, None]:
    """
    Yields consecutive tuples of at most slice_size items.

    Nothing is yielded for slice_size < 1 or items None.
    """

    if slice_size < 1 or items is None:
        return

    iterator = iter(items)
    while batch := tuple(islice(iterator, slice_size)):
        yield batch


def create_rollout_task(
    logger: Logger,
    slice_index: int,
    index: int,
    x0: np.ndarray,
    **kwargs: Any,
) -> Task:
    """
    Creates an async task that evaluates one initial condition in a worker thread.
    """

    task: Task = create_task(to_thread(evaluate_one, index=index, x0=x0, **kwargs))
    logger.debug(
        dict(
            stage="Rollout task created",
            slice_index=slice_index,
            index=index,
            status="Success",
        )
    )
    return task


async def evaluate_slice(
    logger: Logger,
    slice_index: int,
    items: Sequence[tuple[int, np.ndarray]],
    **kwargs: Any,
) -> list[EvaluationRecord]:
    """
    Evaluates a slice of (index, x0) pairs concurrently.
    """

    tasks = [
        create_rollout_task(
            logger, slice_index=slice_index, index=index, x0=x0, **kwargs
        )
        for index, x0 in items
    ]

    started = perf_counter()
    results = await gather(*tasks)

    logger.debug(
        dict(
            stage="Executed rollout tasks",
            slice_index=slice_index,
            rollouts=len(results),
            seconds=round(perf_counter() - started, 3),
            status="Success",
        )
    )
    return list(results)


async def evaluate_controllers(
    logger: Logger,
    plant: Plant,
    states: np.ndarray,
    learned_factory: ControllerFactory,
    optimal_factory: ControllerFactory,
    cost: CostSpec,
    horizon: int,
    tail_tol: float,
    concurrent_tasks: int = 4,
) -> list[EvaluationRecord]:
    """
    Compares learned and optimal closed-loop costs from every initial state.

    Results keep the order of states regardless of scheduling.
    """

    logger.info(
        dict(
            stage="Start evaluation",
            n_initial_conditions=len(states),
            concurrent_tasks=concurrent_tasks,
        )
    )
    records: list[EvaluationRecord] = []
    for slice_index, items in enumerate(
        get_sliced_iterator(enumerate(states), concurrent_tasks)
    ):
        records.extend(
            await evaluate_slice(
                logger,
                slice_index,
                items,
                plant=plant,
                learned_factory=learned_factory,
                optimal_factory=optimal_factory,
                cost=cost,
                horizon=horizon,
                tail_tol=tail_tol,
            )
        )

    logger.info(
        dict(
            stage="Finish evaluation",
            avg_relative_error=average_error(records),
            status="Success",
        )
    )
    return records


def average_error(records: Sequence[EvaluationRecord]) -> float:
    if not records:
        return float("nan")
    return float(np.mean([record.relative_error for record in records]))


def table_text(iterations: int, avg_error: float, avg_time: float) -> str:
    """Aligned text table with the columns #iter, avg. cost error, avg. time"""

    header = ("", "# iter", "avg. cost error", "avg. time (s)")
    row = ("QL", str(iterations), f"{avg_error:.4e}", f"{avg_time:.3e}")
    widths = [max(len(a), len(b)) for a, b in zip(header, row)]
    lines = [
        " | ".join(cell.ljust(width) for cell, width in zip(header, widths)),
        "-+-".join("-" * width for width in widths),
        " | ".join(cell.ljust(width) for cell, width in zip(row, widths)),
    ]
    return "\n".join(line.rstrip() for line in lines) + "\n"
