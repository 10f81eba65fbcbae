"""
Construction of Gamma from persistently exciting data, and the nonminimal
state z = (u_window, Gamma y_window) built from input-output windows.
"""
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import scipy.linalg as sla

from src.func.datastore import Dataset, build_hankel
from src.func.errors import InputError, RankDeficient
from src.func.numerics import (
    EPS,
    as_matrix,
    pivoted_independent_rows,
    rank_with_tolerance,
)
from src.func.serialize import to_nested

METHODS = ("exact", "svd")

# z vector of size m * ell + eta_bound
NonminimalState = np.ndarray


@dataclass(frozen=True)
class EmbeddingMap:
    gamma: np.ndarray
    eta_bound: int
    ell: int
    m: int
    p: int
    # output-block rows in the order the construction placed them
    permutation: tuple[int, ...]
    method: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise InputError(f"unknown Gamma method '{self.method}'")
        if self.gamma.shape != (self.eta_bound, self.p * self.ell):
            raise InputError(
                f"Gamma has shape {self.gamma.shape}, expected "
                f"{(self.eta_bound, self.p * self.ell)}"
            )

    @property
    def state_dim(self) -> int:
        return self.m * self.ell + self.eta_bound

    def as_dict(self) -> dict[str, Any]:
        return dict(
            eta_bound=self.eta_bound,
            ell=self.ell,
            m=self.m,
            p=self.p,
            method=self.method,
            gamma=to_nested(self.gamma),
            permutation=list(self.permutation),
        )

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "EmbeddingMap":
        try:
            return cls(
                gamma=np.array(payload["gamma"], dtype=float, ndmin=2),
                eta_bound=int(payload["eta_bound"]),
                ell=int(payload["ell"]),
                m=int(payload["m"]),
                p=int(payload["p"]),
                permutation=tuple(int(i) for i in payload["permutation"]),
                method=payload["method"],
            )
        except KeyError as e:
            raise InputError(f"embedding: missing field {e}")
        except (TypeError, ValueError) as e:
            raise InputError(f"embedding: malformed field ({e})")


def _output_rows_off_input_span(D: Dataset, eta_bound: int) -> np.ndarray:
    """
    Output block of H_minus with its projection on the input-row span removed.

    Rows chosen from this residual are independent jointly with the input rows.
    """

    if eta_bound < 1 or eta_bound > D.p * D.ell:
        raise InputError(
            f"eta_bound {eta_bound} must lie in [1, p*ell] = [1, {D.p * D.ell}]"
        )
    minus = build_hankel(D).minus
    inputs = minus[: D.m * D.ell]
    outputs = minus[D.m * D.ell :]

    input_basis = sla.orth(inputs.T)
    return outputs - (outputs @ input_basis) @ input_basis.T


def build_gamma(
    D: Dataset, eta_bound: int, tol: Optional[float] = None
) -> EmbeddingMap:
    """
    Exact construction: pick eta_bound output rows that, stacked under the
    input rows, have full row rank. The permutation puts them first, and
    Gamma is the top of its inverse, i.e. a row selector.

    Raises:
        RankDeficient: fewer than eta_bound independent output rows at tol.
    """

    residual = _output_rows_off_input_span(D, eta_bound)
    selected = pivoted_independent_rows(residual, eta_bound, tol)
    rest = [row for row in range(D.p * D.ell) if row not in selected]
    permutation = tuple(selected + rest)

    # Pi is a pure permutation, so its inverse is its transpose
    pi = np.eye(D.p * D.ell)[:, list(permutation)]
    pi_inv = pi.T
    return EmbeddingMap(
        gamma=pi_inv[:eta_bound],
        eta_bound=eta_bound,
        ell=D.ell,
        m=D.m,
        p=D.p,
        permutation=permutation,
        method="exact",
    )


def build_gamma_svd(D: Dataset, eta_bound: int) -> EmbeddingMap:
    """
    Rank-eta_bound truncation for noisy data: Gamma holds the leading left
    singular vectors of the output block once the input-row span is removed.

    Raises:
        RankDeficient: the output block carries no signal beyond rank eta_bound - 1.
    """

    residual = _output_rows_off_input_span(D, eta_bound)
    left, singular_values, _ = np.linalg.svd(residual, full_matrices=False)
    largest = singular_values[0] if singular_values.size else 0.0
    floor = max(residual.shape) * EPS * largest
    achieved = int(np.count_nonzero(singular_values > floor))
    if singular_values[0] == 0.0 or achieved < eta_bound:
        raise RankDeficient(achieved, eta_bound, "output block has no usable signal")

    return EmbeddingMap(
        gamma=left[:, :eta_bound].T.copy(),
        eta_bound=eta_bound,
        ell=D.ell,
        m=D.m,
        p=D.p,
        permutation=tuple(range(D.p * D.ell)),
        method="svd",
    )


def gamma_row_rank(emap: EmbeddingMap, tol: Optional[float] = None) -> int:
    return rank_with_tolerance(emap.gamma, tol).numerical_rank


def make_state(emap: EmbeddingMap, u_window: Any, y_window: Any) -> NonminimalState:
    """z = (u_{t-ell} .. u_{t-1}, Gamma y_[t-ell, t-1])"""

    u = np.asarray(u_window, dtype=float)
    y = np.asarray(y_window, dtype=float)
    if u.shape != (emap.ell, emap.m) or y.shape != (emap.ell, emap.p):
        raise InputError(
            f"windows must be {(emap.ell, emap.m)} and {(emap.ell, emap.p)}, "
            f"got {u.shape} and {y.shape}"
        )
    return np.concatenate([u.reshape(-1), emap.gamma @ y.reshape(-1)])


def stack_states(
    emap: EmbeddingMap, u_windows: np.ndarray, y_windows: np.ndarray
) -> np.ndarray:
    """
    Column j is make_state of window j.

    Args:
        u_windows: (count, ell, m) array.
        y_windows: (count, ell, p) array.
    """

    count = u_windows.shape[0]
    u_flat = as_matrix(u_windows.reshape(count, -1).T, "u windows")
    y_flat = as_matrix(y_windows.reshape(count, -1).T, "y windows")
    if u_flat.shape[0] != emap.m * emap.ell or y_flat.shape[0] != emap.p * emap.ell:
        raise InputError("window sizes do not match the embedding")
    return np.vstack([u_flat, emap.gamma @ y_flat])
