from unittest.mock import Mock

import numpy as np
import pyarrow as pa
import pyarrow.dataset as ds
import pyarrow.parquet as pq
import pytest

from src.func.errors import InputError
from src.func.parquet import (
    open_trajectory_source,
    read_trajectory,
    trajectory_schema,
    write_csv,
    write_trajectory,
)
from src.func.systems import Trajectory


def test_trajectory_schema():
    schema = trajectory_schema(2, 3)

    assert schema.names == ["u0", "u1", "y0", "y1", "y2"]
    assert all(field.type == pa.float64() for field in schema)


def test_open_trajectory_source():
    schema = trajectory_schema(1, 1)
    table = pa.table(dict(u0=[0.5, -0.5], y0=[1.0, 0.75]), schema=schema)
    records = ds.dataset([table])
    logger = Mock()
    factory = Mock(return_value=records)

    found = open_trajectory_source(
        logger, "records/run.parquet", schema, Mock(), dataset_factory=factory
    )

    assert found is records
    assert factory.call_args.kwargs["source"] == "records/run.parquet"
    assert factory.call_args.kwargs["schema"] is schema
    logger.error.assert_not_called()

    broken = Mock(side_effect=OSError("no such file"))
    assert open_trajectory_source(logger, "gone", schema, Mock(), broken) is None
    logger.error.assert_called_once()


def test_write_and_read_trajectory(tmp_path):
    rng = np.random.default_rng(0)
    trajectory = Trajectory(
        inputs=rng.uniform(-1.0, 1.0, (20, 2)), outputs=rng.uniform(-1.0, 1.0, (20, 3))
    )

    path = write_trajectory(trajectory, tmp_path / "records" / "long.parquet")
    loaded = read_trajectory(Mock(), str(path), m=2, p=3)

    assert np.array_equal(loaded.inputs, trajectory.inputs)
    assert np.array_equal(loaded.outputs, trajectory.outputs)


def test_read_trajectory_failure(tmp_path):
    logger = Mock()

    with pytest.raises(InputError):
        read_trajectory(logger, str(tmp_path / "missing.parquet"), m=1, p=1)
    logger.error.assert_called_once()


def test_write_csv(tmp_path):
    path = write_csv(
        dict(sigma=[0.01, 0.001], avg_relative_error=[1e-3, None]),
        tmp_path / "sweep.csv",
    )

    lines = path.read_text().splitlines()
    assert lines[0] == '"sigma","avg_relative_error"'
    assert len(lines) == 3


def test_read_trajectory_rejects_non_numeric_column(tmp_path):
    path = tmp_path / "text.parquet"
    pq.write_table(pa.table(dict(u0=["0.1", "x"], y0=[0.2, 0.3])), path)
    logger = Mock()

    with pytest.raises(InputError) as e:
        read_trajectory(logger, str(path), m=1, p=1)
    assert e.value.exit_code == 2
    logger.error.assert_called_once()


def test_read_trajectory_rejects_missing_column(tmp_path):
    path = tmp_path / "inputs_only.parquet"
    pq.write_table(pa.table(dict(u0=[0.1, 0.2])), path)

    with pytest.raises(InputError):
        read_trajectory(Mock(), str(path), m=1, p=1)
