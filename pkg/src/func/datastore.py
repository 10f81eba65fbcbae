"""Input-output datasets: collection, persistence, Hankel matrices and the
persistence-of-excitation check.
"""
from dataclasses import dataclass
from logging import Logger
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np

from src.func.errors import Diverged, InputError
from src.func.numerics import rank_with_tolerance
from src.func.serialize import read_json, to_nested, write_json
from src.func.systems import Plant, Trajectory, simulate

# Draws `size` samples from a seeded generator, returns an array (size, dim)
SampleLaw = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class Dataset:
    """
    nu input-output records of length ell + 1.

    u has shape (nu, ell + 1, m) and y has shape (nu, ell + 1, p).
    """

    m: int
    p: int
    ell: int
    seed: Optional[int]
    u: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        expected_u = (self.nu, self.ell + 1, self.m)
        expected_y = (self.nu, self.ell + 1, self.p)
        if self.ell < 1 or self.nu < 1:
            raise InputError("dataset needs ell >= 1 and at least one trajectory")
        if self.u.shape != expected_u or self.y.shape != expected_y:
            raise InputError(
                f"dataset shapes u {self.u.shape}, y {self.y.shape} do not match "
                f"{expected_u}, {expected_y}"
            )
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y))):
            raise InputError("dataset entries must be finite")

    @property
    def nu(self) -> int:
        return self.u.shape[0]

    def trajectory(self, j: int) -> Trajectory:
        return Trajectory(inputs=self.u[j], outputs=self.y[j])


@dataclass(frozen=True)
class HankelPair:
    # u_[0,ell] over y_[0,ell-1], one column per trajectory
    full: np.ndarray
    # u_[0,ell-1] over y_[0,ell-1]
    minus: np.ndarray


@dataclass(frozen=True)
class PEReport:
    is_pe: bool
    rank: int
    required: int
    enough_trajectories: bool

    def as_dict(self) -> dict[str, Any]:
        return dict(
            is_pe=self.is_pe,
            rank=self.rank,
            required=self.required,
            enough_trajectories=self.enough_trajectories,
        )


def uniform_law(low: float, high: float, dim: int) -> SampleLaw:
    return lambda rng, size: rng.uniform(low, high, size=(size, dim))


def zero_law(dim: int) -> SampleLaw:
    return lambda rng, size: np.zeros((size, dim))


def collect_dataset(
    logger: Logger,
    plant: Plant,
    nu: int,
    ell: int,
    input_law: SampleLaw,
    x0_law: SampleLaw,
    seed: int,
    output_sigma: float = 0.0,
    state_sigma: float = 0.0,
) -> Dataset:
    """
    Simulates nu independent trajectories of length ell + 1.

    Trajectory j draws its initial state, inputs and noise from a generator
    spawned from the master seed at index j, so the dataset is reproducible
    from the seed alone.

    Args:
        output_sigma: Std of Gaussian noise added to recorded outputs.
        state_sigma: Std of Gaussian noise added to the state after each step.
    """

    if nu < 1 or ell < 1:
        raise InputError("collect_dataset needs nu >= 1 and ell >= 1")

    length = ell + 1
    u = np.empty((nu, length, plant.m))
    y = np.empty((nu, length, plant.p))
    streams = np.random.SeedSequence(seed).spawn(nu)

    for j, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        x0 = x0_law(rng, 1)[0]
        inputs = input_law(rng, length)
        state_noise = (
            state_sigma * rng.standard_normal((length, plant.n))
            if state_sigma > 0
            else None
        )
        try:
            trajectory = simulate(plant, x0, inputs, state_noise=state_noise)
        except Diverged as e:
            raise Diverged(e.step, trajectory=j) from e

        u[j] = trajectory.inputs
        y[j] = trajectory.outputs
        if output_sigma > 0:
            y[j] += output_sigma * rng.standard_normal((length, plant.p))

    logger.info(
        dict(
            stage="Collect dataset",
            plant=plant.name,
            nu=nu,
            ell=ell,
            seed=seed,
            output_sigma=output_sigma,
            state_sigma=state_sigma,
            status="Success",
        )
    )
    return Dataset(m=plant.m, p=plant.p, ell=ell, seed=seed, u=u, y=y)


def dataset_from_long_trajectory(
    trajectory: Trajectory, ell: int, seed: Optional[int] = None
) -> Dataset:
    """Slices one long record into windows of length ell + 1 with stride 1"""

    length = len(trajectory)
    if length < ell + 1:
        raise InputError(
            f"trajectory of length {length} is shorter than a window of {ell + 1}"
        )
    starts = range(length - ell)
    u = np.stack([trajectory.inputs[s : s + ell + 1] for s in starts])
    y = np.stack([trajectory.outputs[s : s + ell + 1] for s in starts])
    return Dataset(
        m=trajectory.inputs.shape[1],
        p=trajectory.outputs.shape[1],
        ell=ell,
        seed=seed,
        u=u,
        y=y,
    )


def build_hankel(D: Dataset) -> HankelPair:
    """
    Stacks every trajectory into one column: inputs first, then outputs,
    each block in time order.
    """

    u_full = D.u.reshape(D.nu, -1).T
    u_minus = D.u[:, : D.ell, :].reshape(D.nu, -1).T
    y_past = D.y[:, : D.ell, :].reshape(D.nu, -1).T
    return HankelPair(
        full=np.vstack([u_full, y_past]), minus=np.vstack([u_minus, y_past])
    )


def check_pe(D: Dataset, eta_bound: int, tol: Optional[float] = None) -> PEReport:
    """
    Rank test of H_full against m(ell+1) + eta_bound.

    Too few trajectories is reported through enough_trajectories, never raised.
    """

    if eta_bound < 1:
        raise InputError("eta_bound must be at least 1")

    required = D.m * (D.ell + 1) + eta_bound
    rank = rank_with_tolerance(build_hankel(D).full, tol).numerical_rank
    return PEReport(
        is_pe=rank == required,
        rank=rank,
        required=required,
        enough_trajectories=D.nu >= required,
    )


#######################
# Persistence
#######################


def dataset_to_dict(D: Dataset) -> dict[str, Any]:
    return dict(
        m=D.m,
        p=D.p,
        ell=D.ell,
        seed=D.seed,
        trajectories=[
            dict(u=to_nested(D.u[j]), y=to_nested(D.y[j])) for j in range(D.nu)
        ],
    )


def _rows(value: Any, count: int, width: int, path: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != count:
        got = len(value) if isinstance(value, list) else type(value).__name__
        raise InputError(f"{path}: expected {count} rows, got {got}")
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != width:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise InputError(f"{path}[{i}]: expected {width} floats, got {got}")
        for k, entry in enumerate(row):
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise InputError(f"{path}[{i}][{k}]: entries must be numbers")
    return np.array(value, dtype=float)


def dataset_from_dict(payload: dict[str, Any]) -> Dataset:
    """Validates a decoded dataset file, naming the offending path on error"""

    for key in ("m", "p", "ell", "seed", "trajectories"):
        if key not in payload:
            raise InputError(f"dataset: missing field '{key}'")
    for key in ("m", "p", "ell", "seed"):
        value = payload[key]
        if key == "seed" and value is None:
            continue
        if isinstance(value, bool) or not isinstance(value, int):
            raise InputError(f"dataset.{key}: expected an integer")
    m, p, ell = payload["m"], payload["p"], payload["ell"]
    trajectories = payload["trajectories"]
    if not isinstance(trajectories, list) or len(trajectories) == 0:
        raise InputError("dataset.trajectories: expected a non-empty array")

    u = []
    y = []
    for j, record in enumerate(trajectories):
        path = f"dataset.trajectories[{j}]"
        if not isinstance(record, dict) or "u" not in record or "y" not in record:
            raise InputError(f"{path}: expected an object with 'u' and 'y'")
        u.append(_rows(record["u"], ell + 1, m, f"{path}.u"))
        y.append(_rows(record["y"], ell + 1, p, f"{path}.y"))

    return Dataset(
        m=m, p=p, ell=ell, seed=payload["seed"], u=np.stack(u), y=np.stack(y)
    )


def save_dataset(D: Dataset, path: Union[str, Path]) -> Path:
    return write_json(dataset_to_dict(D), path)


def load_dataset(path: Union[str, Path]) -> Dataset:
    return dataset_from_dict(read_json(path))
