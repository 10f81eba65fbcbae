"""
Model-based ground truth: lifted matrices of the registry plants, Riccati
optimal gains, observability lag, observable realizations, model-based
Q-matrices, least-squares identification and the disturbed cost.

The learning path never imports this module.
"""
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from src.func.errors import ConfigError, InputError, NotObservable, RankDeficient
from src.func.numerics import (
    EPS,
    as_matrix,
    as_square,
    rank_with_tolerance,
    riccati_residual,
    solve_dare,
    solve_discrete_lyapunov,
    spectral_radius,
)
from src.func.qlearn import Policy, QMatrix, policy_update
from src.func.systems import (
    Controller,
    CostSpec,
    History,
    LiftingMap,
    Plant,
    get_plant,
    polynomial_psi,
)

MARKOV_TERMS = 50
LIFTING_CHECK_SAMPLES = 64
LIFTING_TOL = 1e-12

POLY_A = np.array(
    [
        [0.7, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.9, 0.0, -1.0, 1.0, 0.0],
        [0.0, -1.0, 0.8, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.49, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.343, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.16807],
    ]
)
POLY_B = np.array(
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
)
POLY_C = np.hstack([np.eye(3), np.zeros((3, 3))])


@dataclass(frozen=True)
class LiftedModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    psi: Optional[LiftingMap] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        a = as_square(self.A, "A")
        b = as_matrix(self.B, "B")
        c = as_matrix(self.C, "C")
        if b.shape[0] != a.shape[0] or c.shape[1] != a.shape[0]:
            raise InputError(
                f"lifted model dimensions inconsistent: A {a.shape}, "
                f"B {b.shape}, C {c.shape}"
            )
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def eta(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class OptimalSolution:
    P: np.ndarray
    Kstar: np.ndarray
    Qxi: np.ndarray


@dataclass(frozen=True)
class LeastSquaresModel:
    Ahat: np.ndarray
    Bhat: np.ndarray
    residual: np.ndarray


def observability_matrix(A: np.ndarray, C: np.ndarray, blocks: int) -> np.ndarray:
    rows = [C]
    for _ in range(blocks - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def markov_parameters(A: Any, B: Any, C: Any, count: int = MARKOV_TERMS) -> np.ndarray:
    """C A^k B for k = 0 .. count - 1, shape (count, p, m)"""

    a, b, c = np.asarray(A, float), np.asarray(B, float), np.asarray(C, float)
    params = np.empty((count, c.shape[0], b.shape[1]))
    propagated = b
    for k in range(count):
        params[k] = c @ propagated
        propagated = a @ propagated
    return params


def lifting_mismatch(
    model: LiftedModel,
    plant: Plant,
    samples: int = LIFTING_CHECK_SAMPLES,
    seed: int = 0,
    low: float = -1.0,
    high: float = 1.0,
) -> float:
    """
    Worst deviation from Psi(f(x,u)) = A Psi(x) + B u and h(x) = C Psi(x) over
    seeded uniform samples.
    """

    if model.psi is None:
        raise InputError("model has no lifting function")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = rng.uniform(low, high, plant.n)
        u = rng.uniform(low, high, plant.m)
        lifted = model.psi(x)
        dynamics = model.psi(plant.step_map(x, u)) - model.A @ lifted - model.B @ u
        output = plant.output_map(x) - model.C @ lifted
        worst = max(
            worst, float(np.max(np.abs(dynamics))), float(np.max(np.abs(output)))
        )
    return worst


def lifted_model(name: str, **matrices: Any) -> LiftedModel:
    """
    Exact lifted matrices of a registry plant.

    The benchmark constants are checked against Psi propagated through the
    nonlinear dynamics on every call.
    """

    if name == "paper_sec4":
        model = LiftedModel(
            A=POLY_A.copy(), B=POLY_B.copy(), C=POLY_C.copy(), psi=polynomial_psi
        )
        mismatch = lifting_mismatch(model, get_plant(name))
        if mismatch > LIFTING_TOL:
            raise ConfigError(f"{name} lifted model mismatch {mismatch:.3g}")
        return model
    if name == "scalar_stable":
        return LiftedModel(
            A=[[0.5]], B=[[1.0]], C=[[1.0]], psi=lambda x: np.asarray(x, float)
        )
    if name == "lti_generic":
        get_plant(name, **matrices)
        return LiftedModel(
            A=matrices["A"],
            B=matrices["B"],
            C=matrices["C"],
            psi=lambda x: np.asarray(x, float),
        )
    raise ConfigError(f"unknown plant '{name}'")


def optimal_gain(model: LiftedModel, cost: CostSpec) -> OptimalSolution:
    """
    P solves the DARE with Qxi = C'QC; K* = (R + B'PB)^{-1} B'PA.

    Raises:
        NoConvergence: (A, B) is not stabilizable.
    """

    qxi = model.C.T @ cost.Q @ model.C
    P = solve_dare(model.A, model.B, qxi, cost.R)
    kstar = np.linalg.solve(cost.R + model.B.T @ P @ model.B, model.B.T @ P @ model.A)
    return OptimalSolution(P=P, Kstar=kstar, Qxi=qxi)


def are_residual(
    model: LiftedModel, cost: CostSpec, solution: OptimalSolution
) -> float:
    residual = riccati_residual(model.A, model.B, solution.Qxi, cost.R, solution.P)
    return float(np.linalg.norm(residual))


def observability_lag(model: LiftedModel, tol: Optional[float] = None) -> int:
    """
    Smallest ell with rank (C; CA; ...; CA^{ell-1}) = eta.

    Raises:
        NotObservable: the rank never reaches eta.
    """

    rank = 0
    for ell in range(1, model.eta + 1):
        obs = observability_matrix(model.A, model.C, ell)
        rank = rank_with_tolerance(obs, tol).numerical_rank
        if rank == model.eta:
            return ell
    raise NotObservable(rank, model.eta)


def kalman_observable_realization(
    A: Any, B: Any, C: Any, tol: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Observable part of (A, B, C) with the same Markov parameters.

    The rows of V span the observable subspace (row space of the
    observability matrix); the unobservable subspace is A-invariant and lies
    in the kernel of C, so (V A V', V B, C V') reproduces the input-output map.
    """

    a = as_square(A, "A")
    b = as_matrix(B, "B")
    c = np.array(C, dtype=float, ndmin=2)
    eta = a.shape[0]
    obs = observability_matrix(a, c, eta)
    _, singular_values, vt = np.linalg.svd(obs)
    if tol is None:
        largest = singular_values[0] if singular_values.size else 0.0
        tol = max(obs.shape) * EPS * largest
    rank = int(np.count_nonzero(singular_values > tol))

    basis = vt[:rank]
    return basis @ a @ basis.T, basis @ b, c @ basis.T


def policy_value(
    Abar: np.ndarray, Bbar: np.ndarray, Qz: np.ndarray, R: np.ndarray, K: np.ndarray
) -> np.ndarray:
    """P with P = Qz + K'RK + (Abar - Bbar K)' P (Abar - Bbar K)"""

    closed_loop = Abar - Bbar @ K
    return solve_discrete_lyapunov(closed_loop, Qz + K.T @ R @ K)


def model_q_matrix(
    Abar: Any, Bbar: Any, Cbar: Any, K: Policy, cost: CostSpec
) -> QMatrix:
    """
    Q-function matrix of policy K on the model (Abar, Bbar, Cbar):
    blocks (Qz + A'PA, A'PB; B'PA, R + B'PB), Qz = C'QC, P the value of K.

    Raises:
        NotSchurStable: Abar - Bbar K is not Schur.
    """

    a = as_square(Abar, "Abar")
    b = as_matrix(Bbar, "Bbar")
    c = as_matrix(Cbar, "Cbar")
    qz = c.T @ cost.Q @ c
    P = policy_value(a, b, qz, cost.R, K.K)

    theta = np.block(
        [
            [qz + a.T @ P @ a, a.T @ P @ b],
            [b.T @ P @ a, cost.R + b.T @ P @ b],
        ]
    )
    return QMatrix(
        theta=(theta + theta.T) / 2,
        state_dim=a.shape[0],
        m=b.shape[1],
        iteration=K.iteration,
    )


def model_policy_theta(Ahat: Any, Bhat: Any, Qhat: Any, K: Policy) -> QMatrix:
    """
    Theta = Qhat + Phi' Theta Phi with Phi = (I; -K) [Ahat Bhat], for a general
    cost matrix Qhat over (z, u).
    """

    a = as_square(Ahat, "Ahat")
    b = as_matrix(Bhat, "Bhat")
    state_dim, m = a.shape[0], b.shape[1]
    phi = np.vstack([np.eye(state_dim), -K.K]) @ np.hstack([a, b])
    theta = solve_discrete_lyapunov(phi, as_square(Qhat, "Qhat"))
    return QMatrix(theta=theta, state_dim=state_dim, m=m, iteration=K.iteration)


def model_policy_iteration(
    Ahat: Any,
    Bhat: Any,
    Qhat: Any,
    K0: Any,
    max_iters: int = 50,
    gain_tol: float = 1e-12,
) -> list[Policy]:
    """Policy iteration on a known (Ahat, Bhat) with cost matrix Qhat"""

    policy = Policy(K=as_matrix(K0, "K0"), iteration=0)
    history = []
    for _ in range(max_iters):
        updated = policy_update(model_policy_theta(Ahat, Bhat, Qhat, policy))
        history.append(updated)
        delta = np.linalg.norm(updated.K - policy.K)
        policy = updated
        if delta < gain_tol:
            break
    return history


def identify_least_squares(
    Zcols: Any, Zplus: Any, tol: Optional[float] = None
) -> LeastSquaresModel:
    """
    [Ahat Bhat] minimizing ||Zplus - [Ahat Bhat] Zcols||.

    Raises:
        RankDeficient: Zcols does not have full row rank.
    """

    z = as_matrix(Zcols, "Zcols")
    z_next = as_matrix(Zplus, "Zplus")
    if z.shape[1] != z_next.shape[1]:
        raise InputError("Zcols and Zplus need the same number of columns")
    rank = rank_with_tolerance(z, tol).numerical_rank
    if rank < z.shape[0]:
        raise RankDeficient(rank, z.shape[0])

    coefficients = np.linalg.lstsq(z.T, z_next.T, rcond=None)[0].T
    state_dim = z_next.shape[0]
    return LeastSquaresModel(
        Ahat=coefficients[:, :state_dim],
        Bhat=coefficients[:, state_dim:],
        residual=z_next - coefficients @ z,
    )


def output_map_least_squares(Zcols: Any, Yell: Any, state_dim: int) -> np.ndarray:
    """Chat with y_ell ~ Chat z_ell; the u_ell coefficients are dropped"""

    solution = np.linalg.lstsq(as_matrix(Zcols).T, as_matrix(Yell).T, rcond=None)
    coefficients = solution[0].T
    return coefficients[:, :state_dim]


def effective_cost_matrix(Cmat: Any, V: Any, Zcols: Any, cost: CostSpec) -> np.ndarray:
    """
    Disturbed cost Qhat = (Cmat + V Z^{-1})' Qbar (Cmat + V Z^{-1}) seen by
    Q-learning when the recorded outputs carry noise V.
    """

    c = as_matrix(Cmat, "Cmat")
    v = np.array(V, dtype=float, ndmin=2)
    z = as_square(Zcols, "Zcols")
    q_bar = cost.q_bar
    rows = q_bar.shape[0]
    if c.shape != (rows, z.shape[0]) or v.shape != (rows, z.shape[1]):
        raise InputError(
            f"effective cost dimensions inconsistent: Cmat {c.shape}, V {v.shape}, "
            f"Zcols {z.shape}, Qbar {q_bar.shape}"
        )
    disturbed = c + np.linalg.solve(z.T, v.T).T
    return disturbed.T @ q_bar @ disturbed


def nonminimal_optimal_gain(
    Ahat: Any, Bhat: Any, Chat: Any, cost: CostSpec
) -> OptimalSolution:
    """Optimal gain of the identified z-realization, i.e. K* T"""

    return optimal_gain(LiftedModel(A=Ahat, B=Bhat, C=Chat), cost)


def closed_loop_radius(Ahat: np.ndarray, Bhat: np.ndarray, K: np.ndarray) -> float:
    return spectral_radius(Ahat - Bhat @ K)


def state_feedback_controller(
    model: LiftedModel, solution: OptimalSolution, warmup: Optional[Any] = None
) -> Controller:
    """
    u_t = -K* Psi(x_t) after replaying the warm-up inputs. Reads the true
    state, so only the evaluation harness may use it.
    """

    if model.psi is None:
        raise InputError("state feedback needs the lifting function")
    m = model.B.shape[1]
    warmup_inputs = (
        np.zeros((0, m)) if warmup is None else np.asarray(warmup, float).reshape(-1, m)
    )

    def controller(history: History) -> np.ndarray:
        t = len(history.inputs)
        if t < len(warmup_inputs):
            return warmup_inputs[t].copy()
        return -solution.Kstar @ model.psi(history.state)

    return controller


def optimal_cost(model: LiftedModel, solution: OptimalSolution, x0: Any) -> float:
    """Psi(x0)' P Psi(x0)"""

    lifted = model.psi(np.asarray(x0, float))
    return float(lifted @ solution.P @ lifted)
