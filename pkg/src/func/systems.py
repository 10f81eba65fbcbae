"""Discrete-time plants, trajectory rollout and infinite-horizon cost.

The learning path only ever sees input-output records produced here.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
import scipy.linalg as sla

from src.func.errors import ConfigError, Diverged, InputError
from src.func.numerics import as_matrix, as_square

StepMap = Callable[[np.ndarray, np.ndarray], np.ndarray]
OutputMap = Callable[[np.ndarray], np.ndarray]
LiftingMap = Callable[[np.ndarray], np.ndarray]

OVERFLOW_GUARD = 1e12
TAIL_TOL = 1e-14


@dataclass(frozen=True)
class Plant:
    name: str
    n: int
    m: int
    p: int
    step_map: StepMap = field(repr=False)
    output_map: OutputMap = field(repr=False)

    def __post_init__(self) -> None:
        if min(self.n, self.m, self.p) < 1:
            raise InputError(f"{self.name}: dimensions must be positive")
        origin = self.step_map(np.zeros(self.n), np.zeros(self.m))
        output = np.asarray(self.output_map(np.zeros(self.n)), dtype=float)
        if np.any(origin != 0) or np.any(output != 0):
            raise InputError(f"{self.name}: the origin must be an equilibrium")
        if output.shape != (self.p,):
            raise InputError(
                f"{self.name}: output map returns shape {output.shape}, "
                f"expected ({self.p},)"
            )


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray
    outputs: np.ndarray
    states: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise InputError("trajectory inputs and outputs must be 2-D")
        if len(self.inputs) < 1 or len(self.inputs) != len(self.outputs):
            raise InputError(
                f"trajectory needs equal, positive lengths, got "
                f"{len(self.inputs)} inputs and {len(self.outputs)} outputs"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.outputs))):
            raise InputError("trajectory entries must be finite")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class CostSpec:
    """Weights of J = sum y'Qy + u'Ru"""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self) -> None:
        for name in ("Q", "R"):
            matrix = as_square(getattr(self, name), name)
            if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
                raise InputError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(matrix).min() <= 0:
                raise InputError(f"{name} must be positive definite")
            object.__setattr__(self, name, matrix)

    @property
    def q_bar(self) -> np.ndarray:
        """blkdiag(Q, R), the weight on stacked (y, u)"""

        return sla.block_diag(self.Q, self.R)

    def stage(self, y: np.ndarray, u: np.ndarray) -> float:
        return float(y @ self.Q @ y + u @ self.R @ u)


@dataclass
class History:
    """What a controller may look at when choosing u_t"""

    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    # oracle-only
    state: Optional[np.ndarray] = None


Controller = Callable[[History], np.ndarray]


@dataclass(frozen=True)
class RolloutCost:
    value: float
    steps: int
    converged: bool


def _check_vector(value: Any, size: int, name: str) -> np.ndarray:
    vector = np.asarray(value, dtype=float).reshape(-1)
    if vector.shape != (size,):
        raise InputError(f"{name}: expected {size} entries, got {vector.size}")
    return vector


def step(plant: Plant, x: Any, u: Any) -> np.ndarray:
    """x_{t+1} = f(x_t, u_t)"""

    state = _check_vector(x, plant.n, "x")
    action = _check_vector(u, plant.m, "u")
    return np.asarray(plant.step_map(state, action), dtype=float)


def simulate(
    plant: Plant,
    x0: Any,
    inputs: Any,
    record_states: bool = False,
    overflow_guard: float = OVERFLOW_GUARD,
    state_noise: Optional[np.ndarray] = None,
) -> Trajectory:
    """
    Rolls the plant forward under a fixed input sequence.

    Args:
        state_noise: Optional (L, n) array added to the state after every step.

    Raises:
        Diverged: the state norm exceeded overflow_guard.
    """

    u = np.array(inputs, dtype=float).reshape(-1, plant.m)
    x = _check_vector(x0, plant.n, "x0")
    outputs = np.empty((len(u), plant.p))
    states = np.empty((len(u), plant.n))

    for t, u_t in enumerate(u):
        if not np.linalg.norm(x) <= overflow_guard:
            raise Diverged(t)
        states[t] = x
        outputs[t] = plant.output_map(x)
        x = step(plant, x, u_t)
        if state_noise is not None:
            x = x + state_noise[t]

    return Trajectory(
        inputs=u, outputs=outputs, states=states if record_states else None
    )


def rollout_cost(
    plant: Plant,
    x0: Any,
    controller: Controller,
    cost: CostSpec,
    horizon: int,
    tail_tol: float = TAIL_TOL,
    overflow_guard: float = OVERFLOW_GUARD,
) -> RolloutCost:
    """
    Closed-loop cost sum_t y'Qy + u'Ru.

    The sum stops at the first stage cost below tail_tol (converged) or after
    horizon stages.
    """

    if horizon < 1:
        raise InputError("horizon must be at least 1")

    x = _check_vector(x0, plant.n, "x0")
    history = History(inputs=[], outputs=[])
    total = 0.0

    for t in range(horizon):
        if not np.linalg.norm(x) <= overflow_guard:
            raise Diverged(t)
        y = np.asarray(plant.output_map(x), dtype=float)
        history.outputs.append(y)
        history.state = x
        u = _check_vector(controller(history), plant.m, "controller output")
        history.inputs.append(u)

        stage_cost = cost.stage(y, u)
        total += stage_cost
        if stage_cost < tail_tol:
            return RolloutCost(value=total, steps=t + 1, converged=True)
        x = step(plant, x, u)

    return RolloutCost(value=total, steps=horizon, converged=False)


def lift(psi: LiftingMap, x: Any) -> np.ndarray:
    return np.asarray(psi(np.asarray(x, dtype=float)), dtype=float)


#######################
# Plant registry
#######################


def _polynomial_step(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x
    return np.array(
        [
            0.7 * x1,
            0.9 * x2 + x1**3 - x1**2 + u[0],
            0.8 * x3 - x2 + x1**5 + u[1],
        ]
    )


def polynomial_psi(x: np.ndarray) -> np.ndarray:
    """Lifting (x1, x2, x3, x1^2, x1^3, x1^5) under which the benchmark is linear"""

    x1, x2, x3 = x
    return np.array([x1, x2, x3, x1**2, x1**3, x1**5])


def polynomial_plant() -> Plant:
    return Plant(
        name="paper_sec4",
        n=3,
        m=2,
        p=3,
        step_map=_polynomial_step,
        output_map=lambda x: np.array(x, dtype=float),
    )


def scalar_stable_plant() -> Plant:
    return lti_plant(A=[[0.5]], B=[[1.0]], C=[[1.0]], name="scalar_stable")


def lti_plant(A: Any, B: Any, C: Any, name: str = "lti_generic") -> Plant:
    """Wraps x+ = Ax + Bu, y = Cx as a Plant"""

    a = as_square(A, "A")
    b = as_matrix(B, "B")
    c = as_matrix(C, "C")
    if b.shape[0] != a.shape[0] or c.shape[1] != a.shape[0]:
        raise InputError(
            f"LTI dimensions inconsistent: A {a.shape}, B {b.shape}, C {c.shape}"
        )
    return Plant(
        name=name,
        n=a.shape[0],
        m=b.shape[1],
        p=c.shape[0],
        step_map=lambda x, u: a @ x + b @ u,
        output_map=lambda x: c @ x,
    )


PLANTS: dict[str, Callable[..., Plant]] = {
    "paper_sec4": polynomial_plant,
    "scalar_stable": scalar_stable_plant,
    "lti_generic": lti_plant,
}


def get_plant(name: str, **matrices: Any) -> Plant:
    """Builds a registry plant; lti_generic needs A, B and C keyword arguments"""

    factory = PLANTS.get(name)
    if factory is None:
        raise ConfigError(f"unknown plant '{name}', expected one of {sorted(PLANTS)}")
    if name == "lti_generic":
        missing = [key for key in ("A", "B", "C") if matrices.get(key) is None]
        if missing:
            raise ConfigError(f"lti_generic plant needs matrices {missing}")
        return factory(matrices["A"], matrices["B"], matrices["C"])
    return factory()
