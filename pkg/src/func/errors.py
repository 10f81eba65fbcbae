"""Exceptions raised by the learning pipeline.

Each exception carries the exit code the command line returns for it:
0 success, 2 config error, 3 data insufficiency, 4 policy failure,
5 numerical failure.
"""
from typing import Any, Optional


class KqlError(Exception):
    """Base class for every pipeline error"""

    exit_code: int = 5

    def details(self) -> dict[str, Any]:
        """Structured payload for log records and reports"""

        return dict(error=type(self).__name__, msg=str(self))


class ConfigError(KqlError):
    exit_code = 2


class InputError(KqlError, ValueError):
    exit_code = 2


class RankDeficient(KqlError):
    exit_code = 3

    def __init__(self, achieved_rank: int, required: int, msg: str = "") -> None:
        self.achieved_rank = achieved_rank
        self.required = required
        super().__init__(
            msg or f"rank {achieved_rank} is below the required {required}"
        )

    def details(self) -> dict[str, Any]:
        return dict(
            super().details(), achieved_rank=self.achieved_rank, required=self.required
        )


class NotPersistentlyExciting(KqlError):
    exit_code = 3

    def __init__(self, report: Any) -> None:
        self.report = report
        super().__init__(
            f"data not persistently exciting: rank {report.rank}, "
            f"required {report.required}"
        )

    def details(self) -> dict[str, Any]:
        return dict(super().details(), pe=self.report.as_dict())


class DataNotRich(KqlError):
    exit_code = 3


class BadInitialPolicy(KqlError):
    exit_code = 4


class InternalStabilityLoss(KqlError):
    exit_code = 4

    def __init__(self, iteration: int, msg: str = "") -> None:
        self.iteration = iteration
        super().__init__(msg or f"iterate {iteration} is not stabilizing")

    def details(self) -> dict[str, Any]:
        return dict(super().details(), iteration=self.iteration)


class NotSchurStable(KqlError):
    def __init__(self, radius: float, msg: str = "") -> None:
        self.radius = radius
        super().__init__(msg or f"matrix is not Schur stable (radius {radius:.6g})")


class NoConvergence(KqlError):
    def __init__(self, iterations: int, msg: str = "") -> None:
        self.iterations = iterations
        super().__init__(msg or f"no convergence after {iterations} iterations")


class IllConditionedUpdate(KqlError):
    def __init__(self, min_eigenvalue: float) -> None:
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"Theta_uu is not positive definite (min eigenvalue {min_eigenvalue:.6g})"
        )


class NotObservable(KqlError):
    def __init__(self, achieved_rank: int, required: int) -> None:
        self.achieved_rank = achieved_rank
        self.required = required
        super().__init__(
            f"observability matrix rank {achieved_rank} is below {required}"
        )


class Diverged(KqlError):
    def __init__(self, step: int, trajectory: Optional[int] = None) -> None:
        self.step = step
        self.trajectory = trajectory
        where = f" in trajectory {trajectory}" if trajectory is not None else ""
        super().__init__(
            f"state norm exceeded the overflow guard at step {step}{where}"
        )

    def details(self) -> dict[str, Any]:
        return dict(super().details(), step=self.step, trajectory=self.trajectory)


class ProtocolError(KqlError):
    pass
