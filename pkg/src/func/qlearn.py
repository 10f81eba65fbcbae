"""
Output-feedback Q-learning by policy iteration on input-output data.

Nothing here sees a model: Z, W and the z_{ell+1} columns are built from the
dataset and Gamma only.
"""
from collections import deque
from dataclasses import dataclass, field
from logging import Logger
from typing import Any, Optional

import numpy as np

from src.func.datastore import Dataset
from src.func.embedding import EmbeddingMap, make_state, stack_states
from src.func.errors import (
    BadInitialPolicy,
    DataNotRich,
    IllConditionedUpdate,
    InputError,
    InternalStabilityLoss,
    NotSchurStable,
    ProtocolError,
    RankDeficient,
)
from src.func.numerics import (
    as_matrix,
    pivoted_independent_rows,
    solve_discrete_lyapunov,
)
from src.func.serialize import to_nested
from src.func.systems import CostSpec, History

MAX_ITERS = 50
GAIN_TOL = 1e-12
PREFLIGHT_HORIZON = 200
PREFLIGHT_GROWTH = 1e6


@dataclass(frozen=True)
class QLearnProblem:
    dataset: Dataset = field(repr=False)
    emap: EmbeddingMap = field(repr=False)
    cost: CostSpec
    K0: np.ndarray
    selected_indices: tuple[int, ...]
    Z: np.ndarray
    W: np.ndarray
    Zplus: np.ndarray
    Uell: np.ndarray
    Yell: np.ndarray
    condition_number: float

    @property
    def state_dim(self) -> int:
        return self.emap.state_dim

    @property
    def mu(self) -> int:
        return self.emap.state_dim + self.emap.m


@dataclass(frozen=True)
class QMatrix:
    theta: np.ndarray
    state_dim: int
    m: int
    # iteration index of the policy this matrix evaluates
    iteration: int = 0
    bellman_residual: float = 0.0

    def __post_init__(self) -> None:
        size = self.state_dim + self.m
        if self.theta.shape != (size, size):
            raise InputError(
                f"Theta has shape {self.theta.shape}, expected {(size, size)}"
            )
        if not np.allclose(self.theta, self.theta.T, rtol=0.0, atol=1e-12):
            raise InputError("Theta must be symmetric")

    @property
    def zz(self) -> np.ndarray:
        return self.theta[: self.state_dim, : self.state_dim]

    @property
    def uz(self) -> np.ndarray:
        return self.theta[self.state_dim :, : self.state_dim]

    @property
    def uu(self) -> np.ndarray:
        return self.theta[self.state_dim :, self.state_dim :]


@dataclass(frozen=True)
class Policy:
    K: np.ndarray
    iteration: int = 0

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.K)):
            raise InputError("policy gain must be finite")


@dataclass(frozen=True)
class IterationDiagnostics:
    iteration: int
    gain_delta: float
    bellman_residual: float
    theta_uu_min_eig: float

    def as_dict(self) -> dict[str, Any]:
        return dict(
            iteration=self.iteration,
            gain_delta=self.gain_delta,
            bellman_residual=self.bellman_residual,
            theta_uu_min_eig=self.theta_uu_min_eig,
        )


@dataclass(frozen=True)
class LearnResult:
    policies: tuple[Policy, ...]
    thetas: tuple[QMatrix, ...]
    converged: bool
    final_gain_delta: float
    diagnostics: tuple[IterationDiagnostics, ...]

    @property
    def final_policy(self) -> Policy:
        return self.policies[-1]

    def as_dict(self) -> dict[str, Any]:
        return dict(
            converged=self.converged,
            final_gain_delta=self.final_gain_delta,
            iterations=[
                dict(K=to_nested(policy.K), **diag.as_dict())
                for policy, diag in zip(self.policies, self.diagnostics)
            ],
        )

    @classmethod
    def from_dict(
        cls, payload: dict[str, Any], state_dim: int, m: int
    ) -> "LearnResult":
        """Rebuilds the policy history; Theta matrices are not persisted"""

        try:
            rows = payload["iterations"]
            policies = tuple(
                Policy(
                    K=np.array(row["K"], dtype=float, ndmin=2),
                    iteration=row["iteration"],
                )
                for row in rows
            )
            diagnostics = tuple(
                IterationDiagnostics(
                    iteration=row["iteration"],
                    gain_delta=row["gain_delta"],
                    bellman_residual=row["bellman_residual"],
                    theta_uu_min_eig=row["theta_uu_min_eig"],
                )
                for row in rows
            )
            converged = bool(payload["converged"])
            final_gain_delta = float(payload["final_gain_delta"])
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"learn result: malformed payload ({e})")
        if not policies:
            raise InputError("learn result: no iterations recorded")
        for policy in policies:
            if policy.K.shape != (m, state_dim):
                raise InputError(
                    f"learn result: gain shape {policy.K.shape}, "
                    f"expected {(m, state_dim)}"
                )
        return cls(
            policies=policies,
            thetas=(),
            converged=converged,
            final_gain_delta=final_gain_delta,
            diagnostics=diagnostics,
        )


def zero_gain(emap: EmbeddingMap) -> np.ndarray:
    return np.zeros((emap.m, emap.state_dim))


def assemble_problem(
    D: Dataset,
    emap: EmbeddingMap,
    cost: CostSpec,
    K0: Optional[Any] = None,
    tol: Optional[float] = None,
) -> QLearnProblem:
    """
    Builds z_ell and z_{ell+1} for every trajectory and selects mu columns
    for which Z = (z_ell; u_ell) is nonsingular.

    Raises:
        DataNotRich: no nonsingular selection exists at tol.
    """

    if (D.m, D.p, D.ell) != (emap.m, emap.p, emap.ell):
        raise InputError("dataset and embedding dimensions differ")
    if cost.Q.shape != (D.p, D.p) or cost.R.shape != (D.m, D.m):
        raise InputError("cost weights do not match the plant dimensions")

    gain = zero_gain(emap) if K0 is None else as_matrix(K0, "K0")
    if gain.shape != (emap.m, emap.state_dim):
        raise InputError(
            f"K0 has shape {gain.shape}, expected {(emap.m, emap.state_dim)}"
        )

    ell = D.ell
    z_ell = stack_states(emap, D.u[:, :ell], D.y[:, :ell])
    z_next = stack_states(emap, D.u[:, 1 : ell + 1], D.y[:, 1 : ell + 1])
    u_ell = D.u[:, ell].T
    y_ell = D.y[:, ell].T
    stacked = np.vstack([z_ell, u_ell])

    mu = emap.state_dim + emap.m
    try:
        columns = pivoted_independent_rows(stacked.T, mu, tol)
    except RankDeficient as e:
        raise DataNotRich(
            f"no {mu} columns give a nonsingular Z (rank {e.achieved_rank})"
        ) from e

    Z = stacked[:, columns]
    return QLearnProblem(
        dataset=D,
        emap=emap,
        cost=cost,
        K0=gain,
        selected_indices=tuple(columns),
        Z=Z,
        W=np.vstack([y_ell, u_ell])[:, columns],
        Zplus=z_next[:, columns],
        Uell=u_ell[:, columns],
        Yell=y_ell[:, columns],
        condition_number=float(np.linalg.cond(Z)),
    )


def _right_divide(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """X Z^{-1}"""

    return np.linalg.solve(Z.T, X.T).T


def evaluate_policy(
    Z: np.ndarray, W: np.ndarray, Zplus: np.ndarray, K: np.ndarray, q_bar: np.ndarray
) -> tuple[np.ndarray, float]:
    """
    Solves Z' Theta Z = W' Qbar W + Sigma' Theta Sigma for Theta.

    Multiplying by Z^{-T} and Z^{-1} turns it into the Lyapunov equation
    Theta = (W Z^-1)' Qbar (W Z^-1) + (Sigma Z^-1)' Theta (Sigma Z^-1).

    Returns:
        Theta and the residual of the raw equation in Frobenius norm.
    """

    sigma = np.vstack([Zplus, -K @ Zplus])
    phi = _right_divide(sigma, Z)
    output_map = _right_divide(W, Z)
    theta = solve_discrete_lyapunov(phi, output_map.T @ q_bar @ output_map)

    raw = Z.T @ theta @ Z - W.T @ q_bar @ W - sigma.T @ theta @ sigma
    return theta, float(np.linalg.norm(raw))


def bellman_solve(problem: QLearnProblem, K: Policy) -> QMatrix:
    """
    Policy evaluation from data.

    Raises:
        NotSchurStable: K does not stabilize the data-implied closed loop.
    """

    theta, residual = evaluate_policy(
        problem.Z, problem.W, problem.Zplus, K.K, problem.cost.q_bar
    )
    return QMatrix(
        theta=theta,
        state_dim=problem.state_dim,
        m=problem.emap.m,
        iteration=K.iteration,
        bellman_residual=residual,
    )


def policy_update(theta: QMatrix) -> Policy:
    """K = Theta_uu^{-1} Theta_uz"""

    min_eig = float(np.linalg.eigvalsh(theta.uu).min())
    if not min_eig > 0:
        raise IllConditionedUpdate(min_eig)
    try:
        gain = np.linalg.solve(theta.uu, theta.uz)
    except np.linalg.LinAlgError:
        raise IllConditionedUpdate(min_eig)
    return Policy(K=gain, iteration=theta.iteration + 1)


def preflight_policy(
    problem: QLearnProblem,
    K: np.ndarray,
    horizon: int = PREFLIGHT_HORIZON,
    growth_limit: float = PREFLIGHT_GROWTH,
) -> bool:
    """
    Propagates the stored z_{ell+1} columns through the closed loop implied by
    the data, z+ = Zplus Z^{-1} (z; -K z), and reports whether they stay bounded.
    """

    closed_loop = _right_divide(problem.Zplus, problem.Z) @ np.vstack(
        [np.eye(problem.state_dim), -K]
    )
    states = problem.Zplus.copy()
    start = max(float(np.linalg.norm(states)), np.finfo(float).tiny)
    for _ in range(horizon):
        states = closed_loop @ states
        if not np.linalg.norm(states) <= growth_limit * start:
            return False
    return True


def run_qlearning(
    logger: Logger,
    problem: QLearnProblem,
    max_iters: int = MAX_ITERS,
    gain_tol: float = GAIN_TOL,
) -> LearnResult:
    """
    Alternates bellman_solve and policy_update from K0 until the Frobenius
    gain change drops below gain_tol or max_iters is reached.

    Raises:
        BadInitialPolicy: K0 is not stabilizing.
        InternalStabilityLoss: a later iterate is not stabilizing.
    """

    if not preflight_policy(problem, problem.K0):
        logger.error(dict(msg="Initial policy diverges on stored data"))
        raise BadInitialPolicy("K0 diverges when propagated through the stored data")

    policy = Policy(K=problem.K0, iteration=0)
    policies: list[Policy] = []
    thetas: list[QMatrix] = []
    diagnostics: list[IterationDiagnostics] = []
    gain_delta = float("inf")
    converged = False

    logger.info(
        dict(
            stage="Start Q-learning",
            mu=problem.mu,
            condition_number=problem.condition_number,
            max_iters=max_iters,
            gain_tol=gain_tol,
        )
    )

    for i in range(max_iters):
        try:
            theta = bellman_solve(problem, policy)
        except NotSchurStable as e:
            logger.error(
                dict(msg="Policy evaluation failed", iteration=i, error=str(e))
            )
            if i == 0:
                raise BadInitialPolicy(f"K0 is not stabilizing: {e}") from e
            raise InternalStabilityLoss(
                i, f"iterate {i} is not stabilizing: {e}"
            ) from e

        updated = policy_update(theta)
        gain_delta = float(np.linalg.norm(updated.K - policy.K))
        record = IterationDiagnostics(
            iteration=updated.iteration,
            gain_delta=gain_delta,
            bellman_residual=theta.bellman_residual,
            theta_uu_min_eig=float(np.linalg.eigvalsh(theta.uu).min()),
        )
        logger.info(dict(stage="Policy iteration", **record.as_dict()))

        policies.append(updated)
        thetas.append(theta)
        diagnostics.append(record)
        policy = updated
        if gain_delta < gain_tol:
            converged = True
            break

    logger.info(
        dict(
            stage="Finish Q-learning",
            iterations=len(policies),
            converged=converged,
            final_gain_delta=gain_delta,
        )
    )
    return LearnResult(
        policies=tuple(policies),
        thetas=tuple(thetas),
        converged=converged,
        final_gain_delta=gain_delta,
        diagnostics=tuple(diagnostics),
    )


class OnlineController:
    """
    Applies u_t = -K z_t from a rolling window of the last ell inputs and outputs.

    Calls must alternate: observe(y_t), then act(). The first ell actions
    replay the warm-up inputs while the window fills.
    """

    def __init__(self, policy: Policy, emap: EmbeddingMap, warmup: Any) -> None:
        warmup_inputs = np.asarray(warmup, dtype=float).reshape(-1, emap.m)
        if len(warmup_inputs) != emap.ell:
            raise InputError(
                f"warm-up needs exactly ell = {emap.ell} inputs, "
                f"got {len(warmup_inputs)}"
            )
        if policy.K.shape != (emap.m, emap.state_dim):
            raise InputError("policy gain does not match the embedding")
        self._policy = policy
        self._emap = emap
        self._warmup = warmup_inputs
        self._inputs: deque = deque(maxlen=emap.ell)
        self._outputs: deque = deque(maxlen=emap.ell)
        self._pending: Optional[np.ndarray] = None
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    def observe(self, y: Any) -> None:
        if self._pending is not None:
            raise ProtocolError("observe called twice without act")
        output = np.asarray(y, dtype=float).reshape(-1)
        if output.shape != (self._emap.p,):
            raise InputError(f"expected {self._emap.p} outputs, got {output.size}")
        self._pending = output

    def act(self) -> np.ndarray:
        if self._pending is None:
            raise ProtocolError("act called before observing the current output")

        if self._t < self._emap.ell:
            u = self._warmup[self._t].copy()
        else:
            z = make_state(self._emap, np.array(self._inputs), np.array(self._outputs))
            u = -self._policy.K @ z

        self._inputs.append(u)
        self._outputs.append(self._pending)
        self._pending = None
        self._t += 1
        return u

    def __call__(self, history: History) -> np.ndarray:
        self.observe(history.outputs[-1])
        return self.act()


def online_controller(
    policy: Policy, emap: EmbeddingMap, warmup: Any
) -> OnlineController:
    return OnlineController(policy, emap, warmup)
