"""Parquet trajectory import and CSV report export"""

from logging import Logger
from pathlib import Path
from typing import Any, Callable, Union

import numpy as np
import pyarrow as pa
import pyarrow.csv as pcsv
import pyarrow.dataset as ds
from pyarrow import fs
from pyarrow import parquet as pq

from src.func.errors import InputError
from src.func.systems import Trajectory

DatasetOptional = Union[ds.Dataset, None]
DataSetFactoryFunction = Callable[[str, pa.schema, fs.FileSystem], DatasetOptional]


def trajectory_schema(m: int, p: int) -> pa.Schema:
    """Columns u0..u{m-1}, y0..y{p-1}, one row per time step"""

    return pa.schema(
        [pa.field(f"u{i}", pa.float64(), False) for i in range(m)]
        + [pa.field(f"y{i}", pa.float64(), False) for i in range(p)]
    )


def open_trajectory_source(
    logger: Logger,
    path: str,
    schema: pa.Schema,
    filesystem: fs.FileSystem,
    dataset_factory: DataSetFactoryFunction = ds.dataset,
) -> DatasetOptional:
    """
    Opens a parquet file or folder of trajectory records.

    The factory is injected so tests can stand in for the filesystem.
    Returns None, with the reason in the log, when nothing can be opened.
    """
    try:
        source = dataset_factory(source=path, schema=schema, filesystem=filesystem)
    except (OSError, pa.ArrowException) as e:
        logger.error(dict(msg="Cannot open trajectory records", path=path, error=e))
        return None

    logger.info(
        dict(
            stage="Open trajectory records",
            path=path,
            columns=schema.names,
            status="Success",
        )
    )
    return source


def read_trajectory(
    logger: Logger,
    path: str,
    m: int,
    p: int,
    filesystem: fs.FileSystem = None,
    dataset_factory: DataSetFactoryFunction = ds.dataset,
) -> Trajectory:
    """
    Reads one long input-output record from parquet.

    Raises:
        InputError: the file cannot be opened or a column is missing.
    """

    schema = trajectory_schema(m, p)
    source = open_trajectory_source(
        logger=logger,
        path=path,
        schema=schema,
        filesystem=filesystem or fs.LocalFileSystem(),
        dataset_factory=dataset_factory,
    )
    if source is None:
        raise InputError(f"cannot read trajectory from {path}")

    try:
        table = source.to_table(columns=schema.names)
    except pa.ArrowException as e:
        logger.error(
            dict(msg="Trajectory records do not match the schema", path=path, error=e)
        )
        raise InputError(
            f"{path}: columns do not match {schema.names} as float64 ({e})"
        )

    for name in schema.names:
        if table.column(name).null_count:
            raise InputError(f"{path}: column '{name}' is missing or has empty cells")
    inputs = np.column_stack([table.column(f"u{i}").to_numpy() for i in range(m)])
    outputs = np.column_stack([table.column(f"y{i}").to_numpy() for i in range(p)])
    return Trajectory(inputs=inputs.astype(float), outputs=outputs.astype(float))


def write_trajectory(trajectory: Trajectory, path: Union[str, Path]) -> Path:
    """Saves a trajectory as a single parquet file"""

    m = trajectory.inputs.shape[1]
    p = trajectory.outputs.shape[1]
    arrays = [pa.array(trajectory.inputs[:, i]) for i in range(m)] + [
        pa.array(trajectory.outputs[:, i]) for i in range(p)
    ]
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pq.write_table(pa.Table.from_arrays(arrays, schema=trajectory_schema(m, p)), target)
    return target


def write_csv(columns: dict[str, list[Any]], path: Union[str, Path]) -> Path:
    """Writes plot-ready columns (equal-length lists) as CSV"""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pcsv.write_csv(pa.table(columns), target)
    return target
