"""Experiment settings: defaults from config.yaml, an optional user file and
command-line overrides, validated into one frozen RunConfig.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
from dynaconf import Dynaconf

from src.func.embedding import METHODS
from src.func.errors import ConfigError, InputError
from src.func.systems import CostSpec, Plant, get_plant


@dataclass(frozen=True)
class NoiseConfig:
    output_sigma: float = 0.0
    state_sigma: float = 0.0
    gamma_method: str = "exact"
    sigmas: tuple[float, ...] = (1e-2, 1e-3, 1e-4)


@dataclass(frozen=True)
class EvalConfig:
    num_initial_conditions: int = 100
    x0_range: tuple[float, float] = (-1.0, 1.0)
    horizon: int = 1000
    tail_tol: float = 1e-14
    concurrent_tasks: int = 4


@dataclass(frozen=True)
class RunConfig:
    plant: str = "paper_sec4"
    eta_bound: int = 6
    ell: Optional[int] = None
    nu: Optional[int] = None
    seed: int = 42
    # diagonal entries or a full matrix; None means identity
    Q: Optional[Any] = None
    R: Optional[Any] = None
    K0: Optional[Any] = None
    max_iters: int = 10
    gain_tol: float = 1e-12
    rank_tol: Optional[float] = 1e-8
    input_range: tuple[float, float] = (-1.0, 1.0)
    x0_range: tuple[float, float] = (-1.0, 1.0)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    # A, B, C for the lti_generic plant
    lti: Optional[dict[str, Any]] = None

    def __post_init__(self) -> None:
        counts = dict(eta_bound=self.eta_bound, max_iters=self.max_iters)
        for key, value in (("ell", self.ell), ("nu", self.nu)):
            if value is not None:
                counts[key] = value
        counts["num_initial_conditions"] = self.eval.num_initial_conditions
        counts["horizon"] = self.eval.horizon
        counts["concurrent_tasks"] = self.eval.concurrent_tasks
        for name, value in counts.items():
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")

        sigmas = (self.noise.output_sigma, self.noise.state_sigma, *self.noise.sigmas)
        if any(sigma < 0 for sigma in sigmas):
            raise ConfigError("noise sigmas must be nonnegative")
        if self.noise.gamma_method not in METHODS:
            raise ConfigError(f"gamma_method must be one of {METHODS}")
        if not self.gain_tol > 0:
            raise ConfigError("gain_tol must be positive")
        for name in ("input_range", "x0_range"):
            low, high = getattr(self, name)
            if not low < high:
                raise ConfigError(f"{name} must satisfy low < high")

    @property
    def window(self) -> int:
        """ell, replaced by eta_bound unless set explicitly"""

        return self.ell if self.ell is not None else self.eta_bound

    def trajectories(self, m: int) -> int:
        """nu, twice the necessary count unless set explicitly"""

        if self.nu is not None:
            return self.nu
        return 2 * (m * (self.window + 1) + self.eta_bound)

    def build_plant(self) -> Plant:
        try:
            return get_plant(self.plant, **(self.lti or {}))
        except InputError as e:
            raise ConfigError(f"invalid plant definition: {e}") from e

    def build_cost(self, plant: Plant) -> CostSpec:
        try:
            cost = CostSpec(Q=_weight(self.Q, plant.p), R=_weight(self.R, plant.m))
        except InputError as e:
            raise ConfigError(f"invalid cost weights: {e}") from e
        if cost.Q.shape != (plant.p, plant.p) or cost.R.shape != (plant.m, plant.m):
            raise ConfigError(
                f"Q must be {plant.p}x{plant.p} and R {plant.m}x{plant.m} "
                f"for plant {plant.name}"
            )
        return cost

    def as_dict(self) -> dict[str, Any]:
        """Effective config, with ell and nu defaults filled in when known"""

        payload = asdict(self)
        payload["ell"] = self.window
        return _plain(payload)


def _weight(value: Optional[Any], size: int) -> np.ndarray:
    if value is None:
        return np.eye(size)
    array = np.array(value, dtype=float)
    return np.diag(array) if array.ndim == 1 else array


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _to_dict(value: Any) -> dict[str, Any]:
    if value is None:
        return {}
    if hasattr(value, "to_dict"):
        value = value.to_dict()
    if not isinstance(value, Mapping):
        raise ConfigError(f"expected a mapping of settings, got {type(value).__name__}")
    return dict(value)


def _build(cls: type, values: Mapping[str, Any]) -> Any:
    """Case-insensitive construction, unknown keys rejected"""

    by_name = {f.name.lower(): f.name for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        name = by_name.get(str(key).lower())
        if name is None:
            raise ConfigError(f"unknown setting '{key}' for {cls.__name__}")
        kwargs[name] = value
    for name, nested in (("noise", NoiseConfig), ("eval", EvalConfig)):
        if name in kwargs and cls is RunConfig:
            kwargs[name] = _build(nested, _to_dict(kwargs[name]))
    for name in ("x0_range", "input_range", "sigmas"):
        if name in kwargs and kwargs[name] is not None:
            kwargs[name] = tuple(float(v) for v in kwargs[name])
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid settings for {cls.__name__}: {e}") from e


def _merge(base: dict[str, Any], update: Mapping[str, Any]) -> dict[str, Any]:
    merged = {str(k).lower(): v for k, v in base.items()}
    for key, value in update.items():
        key = str(key).lower()
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def read_settings_file(path: str) -> dict[str, Any]:
    """Reads a user YAML file; keys may sit under run: or at the top level"""

    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    settings = Dynaconf(
        settings_files=[path], core_loaders=["YAML"], environments=False
    )
    values = {str(k).lower(): v for k, v in _to_dict(settings.as_dict()).items()}
    if "run" in values:
        return _to_dict(values["run"])
    known = {f.name.lower() for f in fields(RunConfig)}
    return {key: value for key, value in values.items() if key in known}


def load_run_config(
    defaults: Any = None,
    config_path: Optional[str] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """
    Merges defaults (the run: section of config.yaml), the user file and the
    seed override, then validates.
    """

    values = _merge({}, _to_dict(defaults))
    if config_path:
        values = _merge(values, read_settings_file(config_path))
    run_config = _build(RunConfig, values)
    if seed is not None:
        run_config = replace(run_config, seed=seed)
    return run_config
