"""Pipeline stages behind the CLI commands
"""
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from logging import Logger
from time import perf_counter
from typing import Any, Optional

import numpy as np

from src.func.datastore import (
    Dataset,
    PEReport,
    check_pe,
    collect_dataset,
    dataset_from_long_trajectory,
    uniform_law,
)
from src.func.embedding import EmbeddingMap, build_gamma, build_gamma_svd
from src.func.errors import (
    ConfigError,
    InputError,
    InternalStabilityLoss,
    KqlError,
    NotPersistentlyExciting,
)
from src.func.evaluate import (
    EvaluationRecord,
    average_error,
    evaluate_controllers,
    finite_or_none,
    initial_states,
)
from src.func.oracle import (
    are_residual,
    lifted_model,
    observability_lag,
    optimal_gain,
    state_feedback_controller,
)
from src.func.parquet import read_trajectory
from src.func.qlearn import (
    LearnResult,
    QLearnProblem,
    assemble_problem,
    online_controller,
    run_qlearning,
)
from src.func.runconfig import RunConfig
from src.func.serialize import to_nested
from src.func.systems import CostSpec, Plant


@dataclass(frozen=True)
class LearnOutcome:
    emap: EmbeddingMap
    problem: QLearnProblem
    result: LearnResult
    learn_seconds: float


def metadata(**values: Any) -> dict[str, Any]:
    """Non-deterministic values, kept apart from the reproducible payload"""

    return dict(created_at=datetime.now(timezone.utc).isoformat(), **values)


def effective_config(run_config: RunConfig, nu: Optional[int] = None) -> dict[str, Any]:
    payload = run_config.as_dict()
    if nu is not None:
        payload["nu"] = nu
    return payload


#######################
# collect
#######################


def run_collect(
    logger: Logger,
    run_config: RunConfig,
    trajectory_path: Optional[str] = None,
) -> tuple[Dataset, PEReport]:
    """
    Simulates the configured plant, or slices a recorded parquet trajectory,
    and runs the rank test.

    Raises:
        NotPersistentlyExciting: the Hankel rank falls short.
    """

    plant = run_config.build_plant()
    ell = run_config.window

    if trajectory_path:
        trajectory = read_trajectory(logger, trajectory_path, m=plant.m, p=plant.p)
        dataset = dataset_from_long_trajectory(trajectory, ell, seed=run_config.seed)
        logger.info(
            dict(
                stage="Slice trajectory",
                path=trajectory_path,
                length=len(trajectory),
                nu=dataset.nu,
                status="Success",
            )
        )
    else:
        dataset = collect_dataset(
            logger,
            plant,
            nu=run_config.trajectories(plant.m),
            ell=ell,
            input_law=uniform_law(*run_config.input_range, plant.m),
            x0_law=uniform_law(*run_config.x0_range, plant.n),
            seed=run_config.seed,
            output_sigma=run_config.noise.output_sigma,
            state_sigma=run_config.noise.state_sigma,
        )

    report = check_pe(dataset, run_config.eta_bound, tol=run_config.rank_tol)
    logger.info(dict(stage="Check PE", **report.as_dict()))
    if not report.is_pe:
        logger.error(
            dict(msg="Dataset is not persistently exciting", **report.as_dict())
        )
        raise NotPersistentlyExciting(report)

    return dataset, report


#######################
# learn
#######################


def learn_from_dataset(
    logger: Logger,
    run_config: RunConfig,
    dataset: Dataset,
    cost: CostSpec,
    gamma_method: Optional[str] = None,
) -> LearnOutcome:
    """
    Builds Gamma, assembles the data matrices and runs policy iteration.

    The exact method is gated on persistence of excitation; the svd method
    is meant for noisy data and skips the gate.
    """

    method = gamma_method or run_config.noise.gamma_method
    if dataset.ell != run_config.window:
        raise ConfigError(
            f"dataset window ell={dataset.ell} differs from "
            f"configured ell={run_config.window}"
        )

    start = perf_counter()
    if method == "exact":
        report = check_pe(dataset, run_config.eta_bound, tol=run_config.rank_tol)
        if not report.is_pe:
            logger.error(
                dict(msg="Dataset is not persistently exciting", **report.as_dict())
            )
            raise NotPersistentlyExciting(report)
        emap = build_gamma(dataset, run_config.eta_bound, tol=run_config.rank_tol)
    else:
        emap = build_gamma_svd(dataset, run_config.eta_bound)

    problem = assemble_problem(
        dataset, emap, cost, K0=run_config.K0, tol=run_config.rank_tol
    )
    logger.debug(
        dict(
            stage="Assemble problem",
            method=method,
            state_dim=emap.state_dim,
            selected=list(problem.selected_indices),
            condition_number=problem.condition_number,
        )
    )
    result = run_qlearning(
        logger, problem, max_iters=run_config.max_iters, gain_tol=run_config.gain_tol
    )
    learn_seconds = perf_counter() - start

    return LearnOutcome(
        emap=emap, problem=problem, result=result, learn_seconds=learn_seconds
    )


def run_learn(
    logger: Logger, run_config: RunConfig, dataset: Dataset
) -> dict[str, Any]:
    """Runs both algorithms on a stored dataset and returns the result payload"""

    plant = run_config.build_plant()
    if (dataset.m, dataset.p) != (plant.m, plant.p):
        raise InputError(
            f"dataset has m={dataset.m}, p={dataset.p}; plant {plant.name} "
            f"has m={plant.m}, p={plant.p}"
        )
    cost = run_config.build_cost(plant)
    outcome = learn_from_dataset(logger, run_config, dataset, cost)
    return dict(
        config=effective_config(run_config, nu=dataset.nu),
        embedding=outcome.emap.as_dict(),
        learn=outcome.result.as_dict(),
        metadata=metadata(learn_seconds=outcome.learn_seconds),
    )


#######################
# evaluate
#######################


async def evaluate_policy_against_optimal(
    logger: Logger,
    run_config: RunConfig,
    plant: Plant,
    cost: CostSpec,
    emap: EmbeddingMap,
    result: LearnResult,
) -> list[EvaluationRecord]:
    """
    Rolls out the final learned policy and the Riccati-optimal state feedback
    from the configured initial conditions, both after ell zero-input steps.
    """

    model = lifted_model(plant.name, **(run_config.lti or {}))
    solution = optimal_gain(model, cost)
    warmup = np.zeros((emap.ell, emap.m))
    policy = result.final_policy

    return await evaluate_controllers(
        logger,
        plant=plant,
        states=initial_states(
            run_config.seed,
            run_config.eval.num_initial_conditions,
            plant.n,
            *run_config.eval.x0_range,
        ),
        learned_factory=lambda: online_controller(policy, emap, warmup),
        optimal_factory=lambda: state_feedback_controller(model, solution, warmup),
        cost=cost,
        horizon=run_config.eval.horizon,
        tail_tol=run_config.eval.tail_tol,
        concurrent_tasks=run_config.eval.concurrent_tasks,
    )


def evaluation_summary(
    records: list[EvaluationRecord], iterations: int
) -> dict[str, Any]:
    errors = [record.relative_error for record in records]
    return dict(
        iterations=iterations,
        num_initial_conditions=len(records),
        avg_relative_error=finite_or_none(average_error(records)),
        max_relative_error=finite_or_none(max(errors)) if errors else None,
        all_converged=all(record.converged for record in records),
    )


async def run_evaluate(
    logger: Logger, run_config: RunConfig, payload: dict[str, Any]
) -> dict[str, Any]:
    """Evaluates the policy stored in a learn result payload"""

    try:
        emap = EmbeddingMap.from_dict(payload["embedding"])
        result = LearnResult.from_dict(payload["learn"], emap.state_dim, emap.m)
        learned_plant = payload["config"]["plant"]
    except (KeyError, TypeError) as e:
        raise InputError(f"result: malformed payload ({e})")
    if learned_plant != run_config.plant:
        raise ConfigError(
            f"result was learned on plant '{learned_plant}', "
            f"config names '{run_config.plant}'"
        )

    plant = run_config.build_plant()
    cost = run_config.build_cost(plant)
    records = await evaluate_policy_against_optimal(
        logger, run_config, plant, cost, emap, result
    )

    learn_seconds = payload.get("metadata", {}).get("learn_seconds")
    return dict(
        config=effective_config(run_config),
        summary=evaluation_summary(records, iterations=len(result.policies)),
        records=[record.as_dict() for record in records],
        metadata=metadata(learn_seconds=learn_seconds),
    )


#######################
# noise sweep
#######################


def is_nonincreasing(rows: list[dict[str, Any]]) -> bool:
    """
    Cost error never grows as sigma shrinks. Failed or unsettled levels count
    as an infinite error.
    """

    ordered = sorted(rows, key=lambda row: row["sigma"], reverse=True)
    errors = [
        row["avg_relative_error"]
        if row.get("status", "ok") == "ok" and row["avg_relative_error"] is not None
        else float("inf")
        for row in ordered
    ]
    return all(later <= earlier for earlier, later in zip(errors, errors[1:]))


async def run_noise_sweep(logger: Logger, run_config: RunConfig) -> dict[str, Any]:
    """
    Repeats collect, learn and evaluate at each output noise level with the
    svd Gamma. A failing level is recorded with its error class and the
    sweep continues.
    """

    plant = run_config.build_plant()
    cost = run_config.build_cost(plant)
    rows: list[dict[str, Any]] = []

    for sigma in run_config.noise.sigmas:
        noise = replace(run_config.noise, output_sigma=sigma)
        sigma_config = replace(run_config, noise=noise)
        row: dict[str, Any] = dict(
            sigma=sigma,
            status="ok",
            iterations=None,
            avg_relative_error=None,
            all_converged=None,
            message=None,
        )
        try:
            dataset = collect_dataset(
                logger,
                plant,
                nu=sigma_config.trajectories(plant.m),
                ell=sigma_config.window,
                input_law=uniform_law(*sigma_config.input_range, plant.m),
                x0_law=uniform_law(*sigma_config.x0_range, plant.n),
                seed=sigma_config.seed,
                output_sigma=sigma,
                state_sigma=sigma_config.noise.state_sigma,
            )
            outcome = learn_from_dataset(
                logger, sigma_config, dataset, cost, gamma_method="svd"
            )
            records = await evaluate_policy_against_optimal(
                logger, sigma_config, plant, cost, outcome.emap, outcome.result
            )
            summary = evaluation_summary(
                records, iterations=len(outcome.result.policies)
            )
            row["iterations"] = summary["iterations"]
            row["avg_relative_error"] = summary["avg_relative_error"]
            row["all_converged"] = summary["all_converged"]
            if not summary["all_converged"]:
                unsettled = sum(not record.converged for record in records)
                row["status"] = InternalStabilityLoss.__name__
                row["message"] = (
                    f"{unsettled} of {len(records)} closed-loop rollouts "
                    f"did not settle within {sigma_config.eval.horizon} steps"
                )
        except KqlError as e:
            logger.error(dict(msg="Noise level failed", sigma=sigma, error=e))
            row["status"] = type(e).__name__
            row["message"] = str(e)

        logger.info(dict(stage="Noise level", **row))
        rows.append(row)

    return dict(
        config=effective_config(run_config),
        rows=rows,
        nonincreasing=is_nonincreasing(rows),
        metadata=metadata(),
    )


#######################
# oracle
#######################


def oracle_summary(logger: Logger, run_config: RunConfig) -> dict[str, Any]:
    """K*, P and the observability lag of the configured plant's lifted model"""

    plant = run_config.build_plant()
    cost = run_config.build_cost(plant)
    model = lifted_model(plant.name, **(run_config.lti or {}))
    solution = optimal_gain(model, cost)
    lag = observability_lag(model)
    residual = are_residual(model, cost, solution)

    logger.info(
        dict(stage="Oracle", plant=plant.name, eta=model.eta, lag=lag, status="Success")
    )
    return dict(
        plant=plant.name,
        eta=model.eta,
        lag=lag,
        Kstar=to_nested(solution.Kstar),
        P=to_nested(solution.P),
        are_residual=residual,
    )
