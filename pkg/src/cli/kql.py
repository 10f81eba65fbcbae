"""
Command-line driver: collect data, learn an output-feedback controller,
evaluate it against the Riccati optimum, sweep output noise and print the
model-based oracle.
"""
import sys
from asyncio import run
from functools import wraps
from logging import Handler
from pathlib import Path
from typing import Any, Callable, Optional

import click

from src.config import config
from src.func.datastore import load_dataset, save_dataset
from src.func.errors import KqlError
from src.func.evaluate import table_text
from src.func.job import (
    oracle_summary,
    run_collect,
    run_evaluate,
    run_learn,
    run_noise_sweep,
)
from src.func.log import LOGGER, close_handler, setup_logger
from src.func.parquet import write_csv
from src.func.runconfig import RunConfig, load_run_config
from src.func.serialize import dumps, read_json, write_json

DATASET_FILE = "dataset.json"
RESULT_FILE = "result.json"


def common_options(command: Callable) -> Callable:
    """--config, --seed and --out, shared by every subcommand"""

    command = click.option(
        "--out",
        "-o",
        type=click.Path(file_okay=False),
        default="out",
        help="Directory for output files",
        show_default=True,
    )(command)
    command = click.option(
        "--seed", "-s", type=click.INT, help="Overrides the configured seed"
    )(command)
    command = click.option(
        "--config",
        "-c",
        "config_path",
        type=click.Path(dir_okay=False),
        help="YAML file overriding the run defaults, optional",
    )(command)
    return command


def job(stage: str) -> Callable:
    """
    Wraps a subcommand: sets up logging, builds the RunConfig and turns
    KqlError into its exit code.
    """

    def decorator(command: Callable) -> Callable:
        @wraps(command)
        def wrapper(
            config_path: Optional[str], seed: Optional[int], out: str, **kwargs: Any
        ):
            handler: Optional[Handler] = setup_logger()
            try:
                run_config = load_run_config(config.get("run"), config_path, seed)
                LOGGER.info(dict(stage=f"Start {stage}", params=run_config.as_dict()))
                command(run_config=run_config, out=Path(out), **kwargs)
            except KqlError as e:
                LOGGER.error(dict(e.details(), stage=stage, status="Failed"))
                click.echo(f"error: {e}", err=True)
                close_handler(handler)
                sys.exit(e.exit_code)

            LOGGER.info(dict(stage=f"Finish {stage}", status="Success"))
            close_handler(handler)

        return wrapper

    return decorator


@click.group()
def main() -> None:
    """Koopman embedding output-feedback Q-learning"""


@main.command()
@common_options
@click.option(
    "--trajectory",
    "-t",
    type=click.Path(),
    help="Parquet file with one long input-output record, sliced instead of simulating",
)
@job("collect")
def collect(run_config: RunConfig, out: Path, trajectory: Optional[str] = None) -> None:
    """Collects a dataset and reports persistence of excitation"""

    dataset, report = run_collect(LOGGER, run_config, trajectory_path=trajectory)
    path = save_dataset(dataset, out / DATASET_FILE)
    click.echo(dumps(dict(pe=report.as_dict(), dataset=str(path))), nl=False)


@main.command()
@common_options
@click.option(
    "--dataset",
    "-d",
    "dataset_path",
    type=click.Path(dir_okay=False),
    help=f"Dataset file, defaults to <out>/{DATASET_FILE}",
)
@job("learn")
def learn(run_config: RunConfig, out: Path, dataset_path: Optional[str] = None) -> None:
    """Builds Gamma and runs output-feedback policy iteration"""

    dataset = load_dataset(dataset_path or out / DATASET_FILE)
    payload = run_learn(LOGGER, run_config, dataset)
    write_json(payload, out / RESULT_FILE)

    for row in payload["learn"]["iterations"]:
        click.echo(
            f"iteration {row['iteration']:>3}  gain delta {row['gain_delta']:.6e}"
        )
    click.echo(f"converged: {str(payload['learn']['converged']).lower()}")


@main.command()
@common_options
@click.option(
    "--result",
    "-r",
    "result_path",
    type=click.Path(dir_okay=False),
    help=f"Learn result file, defaults to <out>/{RESULT_FILE}",
)
@job("evaluate")
def evaluate(
    run_config: RunConfig, out: Path, result_path: Optional[str] = None
) -> None:
    """Compares the learned controller with the optimal one"""

    payload = read_json(result_path or out / RESULT_FILE)
    report = run(run_evaluate(LOGGER, run_config, payload))
    write_json(report, out / "evaluation.json")

    summary = report["summary"]
    avg_error = summary["avg_relative_error"]
    learn_seconds = report["metadata"]["learn_seconds"]
    text = table_text(
        summary["iterations"],
        float("inf") if avg_error is None else avg_error,
        float("nan") if learn_seconds is None else learn_seconds,
    )
    (out / "evaluation.txt").write_text(text)

    records = report["records"]
    columns: dict[str, list[Any]] = dict(index=[r["index"] for r in records])
    for i in range(len(records[0]["x0"]) if records else 0):
        columns[f"x0_{i}"] = [r["x0"][i] for r in records]
    for key in ("learned_cost", "optimal_cost", "relative_error"):
        columns[key] = [r[key] for r in records]
    write_csv(columns, out / "evaluation.csv")

    click.echo(text, nl=False)


@main.command("noise-sweep")
@common_options
@job("noise sweep")
def noise_sweep(run_config: RunConfig, out: Path) -> None:
    """Reruns the pipeline at each output noise level with the svd Gamma"""

    report = run(run_noise_sweep(LOGGER, run_config))
    write_json(report, out / "noise_sweep.json")

    rows = report["rows"]
    keys = ("sigma", "status", "iterations", "avg_relative_error", "all_converged")
    columns = {key: [row[key] for row in rows] for key in keys}
    write_csv(columns, out / "noise_sweep.csv")
    for row in rows:
        error = row["avg_relative_error"]
        click.echo(
            f"sigma {row['sigma']:.1e}  {row['status']:<24} "
            f"avg cost error {'-' if error is None else format(error, '.4e')}"
        )
    click.echo(f"nonincreasing: {str(report['nonincreasing']).lower()}")


@main.command()
@common_options
@job("oracle")
def oracle(run_config: RunConfig, out: Path) -> None:
    """Prints K*, P and the observability lag of the configured plant"""

    summary = oracle_summary(LOGGER, run_config)
    write_json(summary, out / "oracle.json")
    click.echo(dumps(summary), nl=False)


if __name__ == "__main__":
    main()
