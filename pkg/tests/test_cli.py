import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from src.cli.kql import main
from src.func.datastore import Dataset, save_dataset


@pytest.fixture
def runner(tmp_path):
    runner = CliRunner()
    with runner.isolated_filesystem(temp_dir=tmp_path):
        Path("quick.yaml").write_text("run:\n  eval:\n    num_initial_conditions: 5\n")
        yield runner


def test_collect_is_deterministic(runner):
    first = runner.invoke(main, ["collect", "--out", "a"])
    second = runner.invoke(main, ["collect", "--out", "b"])

    assert first.exit_code == 0
    assert second.exit_code == 0
    assert Path("a/dataset.json").read_bytes() == Path("b/dataset.json").read_bytes()
    assert '"is_pe": true' in first.output

    other_seed = runner.invoke(main, ["collect", "--out", "c", "--seed", "7"])
    assert other_seed.exit_code == 0
    assert Path("c/dataset.json").read_bytes() != Path("a/dataset.json").read_bytes()


def test_collect_too_few_trajectories(runner):
    Path("few.yaml").write_text("run:\n  nu: 1\n")

    result = runner.invoke(main, ["collect", "--config", "few.yaml", "--out", "out"])

    assert result.exit_code == 3
    assert not Path("out/dataset.json").exists()


def test_learn_and_evaluate(runner):
    assert runner.invoke(main, ["collect", "--out", "out"]).exit_code == 0

    learned = runner.invoke(main, ["learn", "--out", "out"])
    assert learned.exit_code == 0
    assert "gain delta" in learned.output

    payload = json.loads(Path("out/result.json").read_text())
    assert payload["embedding"]["method"] == "exact"
    assert "learn_seconds" in payload["metadata"]

    evaluated = runner.invoke(
        main, ["evaluate", "--config", "quick.yaml", "--out", "out"]
    )
    assert evaluated.exit_code == 0

    report = json.loads(Path("out/evaluation.json").read_text())
    assert report["summary"]["num_initial_conditions"] == 5
    assert report["summary"]["avg_relative_error"] <= 1e-8
    assert Path("out/evaluation.txt").read_text().splitlines()[2].startswith("QL")
    assert len(Path("out/evaluation.csv").read_text().splitlines()) == 6


def test_learn_is_deterministic(runner):
    runner.invoke(main, ["collect", "--out", "out"])
    runner.invoke(main, ["learn", "--out", "out", "--dataset", "out/dataset.json"])
    first = json.loads(Path("out/result.json").read_text())
    runner.invoke(main, ["learn", "--out", "out"])
    second = json.loads(Path("out/result.json").read_text())

    del first["metadata"], second["metadata"]
    assert first == second


def test_learn_errors(runner):
    missing = runner.invoke(main, ["learn", "--dataset", "missing.json"])
    assert missing.exit_code == 2

    record = dict(u=[[0.1], ["x"]], y=[[0.2], [0.3]])
    Path("text.json").write_text(
        json.dumps(dict(m=1, p=1, ell=1, seed=0, trajectories=[record]))
    )
    malformed = runner.invoke(main, ["learn", "--dataset", "text.json"])
    assert malformed.exit_code == 2
    assert "entries must be numbers" in malformed.output

    zero = Dataset(
        m=2, p=3, ell=6, seed=0, u=np.zeros((40, 7, 2)), y=np.zeros((40, 7, 3))
    )
    save_dataset(zero, "zero.json")
    poor = runner.invoke(main, ["learn", "--dataset", "zero.json", "--out", "out"])
    assert poor.exit_code == 3


def test_config_errors(runner):
    Path("bad.yaml").write_text("run:\n  plant: missing\n")
    assert runner.invoke(main, ["oracle", "--config", "bad.yaml"]).exit_code == 2

    Path("typo.yaml").write_text("run:\n  max_iter: 3\n")
    assert runner.invoke(main, ["oracle", "--config", "typo.yaml"]).exit_code == 2


def test_oracle(runner):
    result = runner.invoke(main, ["oracle", "--out", "out"])

    assert result.exit_code == 0
    summary = json.loads(Path("out/oracle.json").read_text())
    assert summary["lag"] == 3
    assert summary["plant"] == "paper_sec4"


def _without_metadata(path: str) -> dict:
    payload = json.loads(Path(path).read_text())
    payload.pop("metadata", None)
    return payload


def test_reports_are_reproducible(runner):
    runner.invoke(main, ["collect", "--out", "out"])
    runner.invoke(main, ["learn", "--out", "out"])
    quick = ["--config", "quick.yaml"]

    for out in ("a", "b"):
        Path(out).mkdir()
        Path(out, "result.json").write_bytes(Path("out/result.json").read_bytes())
        assert runner.invoke(main, ["evaluate", *quick, "--out", out]).exit_code == 0
        assert runner.invoke(main, ["noise-sweep", *quick, "--out", out]).exit_code == 0
        assert runner.invoke(main, ["oracle", "--out", out]).exit_code == 0

    for name in ("evaluation.json", "noise_sweep.json"):
        assert _without_metadata(f"a/{name}") == _without_metadata(f"b/{name}")
    for name in ("evaluation.csv", "evaluation.txt", "noise_sweep.csv", "oracle.json"):
        assert Path("a", name).read_bytes() == Path("b", name).read_bytes()
