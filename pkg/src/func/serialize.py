"""JSON reading and writing for datasets, embeddings and results"""

import json
from pathlib import Path
from typing import Any, Union

import numpy as np

from src.func.errors import InputError


def to_nested(matrix: np.ndarray) -> list:
    """Row-major nested lists of Python floats (repr round-trips bit-exactly)"""

    return np.asarray(matrix, dtype=float).tolist()


def dumps(payload: dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(payload: dict[str, Any], path: Union[str, Path]) -> Path:
    """Writes payload with sorted keys so reruns are byte-identical"""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps(payload))
    return target


def read_json(path: Union[str, Path]) -> dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}")
    if not isinstance(payload, dict):
        raise InputError(f"{path}: expected a JSON object at the top level")
    return payload
