"""Configuration objects and the run-config file schema."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol

from .const import (
    COUPLING_SHARED,
    COUPLINGS,
    DEFAULT_AUTO_LAMBDA_SCALE,
    DEFAULT_BS_POSITIONS_KM,
    DEFAULT_CARRIER_FREQ,
    DEFAULT_CLEARANCE_M,
    DEFAULT_EXCLUSION_RADIUS_M,
    DEFAULT_EXPECTED_PATHS,
    DEFAULT_GRID_POINTS_PER_AXIS,
    DEFAULT_NUM_ANTENNAS,
    DEFAULT_NUM_SUBCARRIERS,
    DEFAULT_PRUNE_THRESHOLD,
    DEFAULT_SCENE_KM,
    DEFAULT_STOP_TOL,
    DEFAULT_SUBCARRIER_SPACING,
    DESCENT_LBFGS,
    DESCENT_METHODS,
    GAIN_MODELS,
    GAIN_RANDOM_PHASE,
    LAMBDA_AUTO,
    PILOT_ONES,
    PILOT_QPSK,
    PILOTS,
    SCHEMA_VERSION,
    SPEED_OF_LIGHT,
)
from .exceptions import ConfigError
from .models import Condition, Location, Scene

_LOGGER = logging.getLogger(__name__)

KM = 1000.0


def _default_bs_positions() -> tuple[Location, ...]:
    return tuple(Location(x * KM, y * KM) for x, y in DEFAULT_BS_POSITIONS_KM)


def _default_scene() -> Scene:
    x0, y0, x1, y1 = DEFAULT_SCENE_KM
    return Scene(x0 * KM, y0 * KM, x1 * KM, y1 * KM)


@dataclass(frozen=True)
class SystemConfig:
    """Array, waveform and deployment constants shared by every BS."""

    num_antennas: int = DEFAULT_NUM_ANTENNAS
    num_subcarriers: int = DEFAULT_NUM_SUBCARRIERS
    subcarrier_spacing: float = DEFAULT_SUBCARRIER_SPACING
    carrier_freq: float = DEFAULT_CARRIER_FREQ
    element_spacing: float | None = None
    speed_of_light: float = SPEED_OF_LIGHT
    bs_positions: tuple[Location, ...] = field(default_factory=_default_bs_positions)
    pilot: str = PILOT_ONES
    pilot_seed: int = 0
    symbols: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.bs_positions) < 1:
            raise ConfigError("At least one BS is required", field="bs_positions")
        if self.num_antennas < 2:
            raise ConfigError("num_antennas must be >= 2", field="num_antennas")
        if self.num_subcarriers < 2:
            raise ConfigError("num_subcarriers must be >= 2", field="num_subcarriers")
        for name in ("subcarrier_spacing", "carrier_freq", "speed_of_light"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", field=name)
        if self.pilot not in PILOTS:
            raise ConfigError(f"Unknown pilot {self.pilot!r}", field="pilot")

        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2)
        spacing = float(self.element_spacing)  # type: ignore[arg-type]
        if not spacing > 0:
            raise ConfigError(
                "element_spacing must be positive", field="element_spacing"
            )
        if spacing > self.wavelength / 2 * (1 + 1e-12):
            raise ConfigError(
                f"element_spacing {spacing:.4g} m exceeds half a wavelength "
                f"({self.wavelength / 2:.4g} m)",
                field="element_spacing",
            )
        object.__setattr__(self, "symbols", self._make_symbols())

    def _make_symbols(self) -> np.ndarray:
        n = self.num_subcarriers
        if self.pilot == PILOT_QPSK:
            rng = np.random.default_rng(self.pilot_seed)
            quadrant = rng.integers(0, 4, size=n)
            return np.exp(1j * (np.pi / 4 + quadrant * np.pi / 2))
        return np.ones(n, dtype=complex)

    @property
    def wavelength(self) -> float:
        return self.speed_of_light / self.carrier_freq

    @property
    def num_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def bs_array(self) -> np.ndarray:
        """BS positions as a (J, 2) array in metres."""
        return np.array([bs.as_array() for bs in self.bs_positions], dtype=float)


@dataclass(frozen=True)
class LocalDescentConfig:
    """Continuous refinement of atom locations."""

    method: str = DESCENT_LBFGS
    max_steps: int = 100
    step_init: float = 10.0  # metres moved by the first trial step
    armijo_c: float = 1e-4
    tol: float = 1e-9
    rounds: int = 3


@dataclass(frozen=True)
class WeightSolverConfig:
    """Proximal-gradient settings of the weights step."""

    max_iters: int = 3000
    tol: float = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the ADCG solver."""

    lambda1: float | str = LAMBDA_AUTO
    lambda2: float | str = LAMBDA_AUTO
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    max_outer_iters: int | None = None
    expected_paths: int = DEFAULT_EXPECTED_PATHS
    coarse_grid_points_per_axis: int = DEFAULT_GRID_POINTS_PER_AXIS
    local_descent: LocalDescentConfig = field(default_factory=LocalDescentConfig)
    weight_solver: WeightSolverConfig = field(default_factory=WeightSolverConfig)
    stop_tol: float = DEFAULT_STOP_TOL
    exclusion_radius_m: float = DEFAULT_EXCLUSION_RADIUS_M
    mobile_coupling: str = COUPLING_SHARED
    auto_lambda_scale: float = DEFAULT_AUTO_LAMBDA_SCALE
    search_area: Scene = field(default_factory=_default_scene)

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if value != LAMBDA_AUTO and not (
                isinstance(value, (int, float)) and value >= 0
            ):
                raise ConfigError(f"{name} must be >= 0 or 'auto'", field=name)
        if not self.prune_threshold > 0:
            raise ConfigError(
                "prune_threshold must be positive", field="prune_threshold"
            )
        if self.coarse_grid_points_per_axis < 1:
            raise ConfigError(
                "coarse_grid_points_per_axis must be >= 1",
                field="coarse_grid_points_per_axis",
            )
        if self.mobile_coupling not in COUPLINGS:
            raise ConfigError(
                f"Unknown mobile_coupling {self.mobile_coupling!r}",
                field="mobile_coupling",
            )
        if self.local_descent.method not in DESCENT_METHODS:
            raise ConfigError(
                f"Unknown descent method {self.local_descent.method!r}",
                field="local_descent.method",
            )
        if self.max_outer_iters is None:
            object.__setattr__(
                self, "max_outer_iters", 2 * self.expected_paths + 5
            )
        elif self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be >= 1", field="max_outer_iters")

    @property
    def outer_iters(self) -> int:
        return int(self.max_outer_iters)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ExperimentConfig:
    """What the Monte Carlo harness sweeps."""

    conditions: tuple[Condition, ...] = (Condition.NLOS,)
    snr_grid_db: tuple[float, ...] = (-10.0, 0.0, 10.0)
    trials: int = 1
    seed: int = 0
    scene: Scene = field(default_factory=_default_scene)
    num_scatterers: int | None = None
    gain_model: str = GAIN_RANDOM_PHASE
    clearance_m: float = DEFAULT_CLEARANCE_M


@dataclass(frozen=True)
class OutputConfig:
    """Where and how results are written."""

    path: str = "results.csv"
    format: str = "csv"
    record_runtime: bool = False


@dataclass(frozen=True)
class RunConfig:
    """A complete, validated run configuration."""

    system: SystemConfig
    solver: SolverConfig
    experiment: ExperimentConfig
    output: OutputConfig
    schema_version: int = SCHEMA_VERSION


def _not_nan(value: float) -> float:
    if math.isnan(value):
        raise vol.Invalid("value must not be NaN")
    return value


def _snr(value: float) -> float:
    if value == -math.inf:
        raise vol.Invalid("SNR must not be -inf")
    return value


_POSITIVE = vol.All(
    vol.Coerce(float), _not_nan, vol.Range(min=0, min_included=False)
)
_NON_NEGATIVE = vol.All(vol.Coerce(float), _not_nan, vol.Range(min=0))
_POINT_KM = vol.ExactSequence([vol.Coerce(float), vol.Coerce(float)])
_SNR = vol.All(vol.Coerce(float), _not_nan, _snr)
_LAMBDA = vol.Any(LAMBDA_AUTO, _NON_NEGATIVE)


def _scene_km(value: Any) -> list[float]:
    corners = vol.ExactSequence([vol.Coerce(float)] * 4)(value)
    if not (corners[2] > corners[0] and corners[3] > corners[1]):
        raise vol.Invalid(
            "scene_km must be [x_min, y_min, x_max, y_max] with x_max > x_min "
            "and y_max > y_min"
        )
    return corners


def _conditions(value: Any) -> list[str]:
    names = [value] if isinstance(value, str) else value
    if not isinstance(names, list) or not names:
        raise vol.Invalid("condition must be a name or a non-empty list of names")
    allowed = [c.value for c in Condition]
    for name in names:
        if name not in allowed:
            raise vol.Invalid(f"unknown condition {name!r}, expected one of {allowed}")
    return names


SYSTEM_SCHEMA = vol.Schema(
    {
        vol.Optional("num_antennas", default=DEFAULT_NUM_ANTENNAS): vol.All(
            int, vol.Range(min=2)
        ),
        vol.Optional("num_subcarriers", default=DEFAULT_NUM_SUBCARRIERS): vol.All(
            int, vol.Range(min=2)
        ),
        vol.Optional(
            "subcarrier_spacing_hz", default=DEFAULT_SUBCARRIER_SPACING
        ): _POSITIVE,
        vol.Optional("carrier_freq_hz", default=DEFAULT_CARRIER_FREQ): _POSITIVE,
        vol.Optional("element_spacing_m", default=None): vol.Any(None, _POSITIVE),
        vol.Optional("speed_of_light_mps", default=SPEED_OF_LIGHT): _POSITIVE,
        vol.Optional(
            "bs_positions_km",
            default=lambda: [list(p) for p in DEFAULT_BS_POSITIONS_KM],
        ): vol.All([_POINT_KM], vol.Length(min=1)),
        vol.Optional("pilot", default=PILOT_ONES): vol.In(PILOTS),
        vol.Optional("pilot_seed", default=0): vol.All(int, vol.Range(min=0)),
    }
)

LOCAL_DESCENT_SCHEMA = vol.Schema(
    {
        vol.Optional("method", default=DESCENT_LBFGS): vol.In(DESCENT_METHODS),
        vol.Optional("max_steps", default=100): vol.All(int, vol.Range(min=1)),
        vol.Optional("step_init", default=10.0): _POSITIVE,
        vol.Optional("armijo_c", default=1e-4): _POSITIVE,
        vol.Optional("tol", default=1e-9): _POSITIVE,
        vol.Optional("rounds", default=3): vol.All(int, vol.Range(min=1)),
    }
)

WEIGHT_SOLVER_SCHEMA = vol.Schema(
    {
        vol.Optional("max_iters", default=3000): vol.All(int, vol.Range(min=1)),
        vol.Optional("tol", default=1e-12): _POSITIVE,
    }
)

SOLVER_SCHEMA = vol.Schema(
    {
        vol.Optional("lambda1", default=LAMBDA_AUTO): _LAMBDA,
        vol.Optional("lambda2", default=LAMBDA_AUTO): _LAMBDA,
        vol.Optional("prune_threshold", default=DEFAULT_PRUNE_THRESHOLD): _POSITIVE,
        vol.Optional("max_outer_iters", default=None): vol.Any(
            None, vol.All(int, vol.Range(min=1))
        ),
        vol.Optional("expected_paths", default=DEFAULT_EXPECTED_PATHS): vol.All(
            int, vol.Range(min=1)
        ),
        vol.Optional(
            "coarse_grid_points_per_axis", default=DEFAULT_GRID_POINTS_PER_AXIS
        ): vol.All(int, vol.Range(min=1)),
        vol.Optional("local_descent", default=dict): LOCAL_DESCENT_SCHEMA,
        vol.Optional("weight_solver", default=dict): WEIGHT_SOLVER_SCHEMA,
        vol.Optional("stop_tol", default=DEFAULT_STOP_TOL): _POSITIVE,
        vol.Optional(
            "exclusion_radius_m", default=DEFAULT_EXCLUSION_RADIUS_M
        ): _NON_NEGATIVE,
        vol.Optional("mobile_coupling", default=COUPLING_SHARED): vol.In(COUPLINGS),
        vol.Optional("auto_lambda_scale", default=DEFAULT_AUTO_LAMBDA_SCALE): _POSITIVE,
    }
)

EXPERIMENT_SCHEMA = vol.Schema(
    {
        vol.Optional("condition", default="nlos"): _conditions,
        vol.Optional("snr_grid_db", default=lambda: [-10.0, 0.0, 10.0]): vol.All(
            [_SNR], vol.Length(min=1)
        ),
        vol.Optional("trials", default=1): vol.All(int, vol.Range(min=1)),
        vol.Optional("seed", default=0): vol.All(int, vol.Range(min=0)),
        vol.Optional("scene_km", default=lambda: list(DEFAULT_SCENE_KM)): _scene_km,
        vol.Optional("num_scatterers", default=None): vol.Any(
            None, vol.All(int, vol.Range(min=0))
        ),
        vol.Optional("gain_model", default=GAIN_RANDOM_PHASE): vol.In(GAIN_MODELS),
        vol.Optional("clearance_m", default=DEFAULT_CLEARANCE_M): _NON_NEGATIVE,
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Optional("path", default="results.csv"): str,
        vol.Optional("format", default="csv"): vol.In(("csv", "json")),
        vol.Optional("record_runtime", default=False): bool,
    }
)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required("schema_version"): vol.All(int, vol.In((SCHEMA_VERSION,))),
        vol.Optional("system", default=dict): SYSTEM_SCHEMA,
        vol.Optional("solver", default=dict): SOLVER_SCHEMA,
        vol.Optional("experiment", default=dict): EXPERIMENT_SCHEMA,
        vol.Optional("output", default=dict): OUTPUT_SCHEMA,
    }
)


def system_config_from_dict(data: dict[str, Any]) -> SystemConfig:
    """Build a SystemConfig from the validated (km-based) system section."""
    return SystemConfig(
        num_antennas=data["num_antennas"],
        num_subcarriers=data["num_subcarriers"],
        subcarrier_spacing=data["subcarrier_spacing_hz"],
        carrier_freq=data["carrier_freq_hz"],
        element_spacing=data["element_spacing_m"],
        speed_of_light=data["speed_of_light_mps"],
        bs_positions=tuple(
            Location(x * KM, y * KM) for x, y in data["bs_positions_km"]
        ),
        pilot=data["pilot"],
        pilot_seed=data["pilot_seed"],
    )


def system_config_to_dict(cfg: SystemConfig) -> dict[str, Any]:
    """Inverse of system_config_from_dict; positions go back to km."""
    return {
        "num_antennas": cfg.num_antennas,
        "num_subcarriers": cfg.num_subcarriers,
        "subcarrier_spacing_hz": cfg.subcarrier_spacing,
        "carrier_freq_hz": cfg.carrier_freq,
        "element_spacing_m": cfg.element_spacing,
        "speed_of_light_mps": cfg.speed_of_light,
        "bs_positions_km": [[bs.x / KM, bs.y / KM] for bs in cfg.bs_positions],
        "pilot": cfg.pilot,
        "pilot_seed": cfg.pilot_seed,
    }


def _solver_config_from_dict(data: dict[str, Any], scene: Scene) -> SolverConfig:
    return SolverConfig(
        lambda1=data["lambda1"],
        lambda2=data["lambda2"],
        prune_threshold=data["prune_threshold"],
        max_outer_iters=data["max_outer_iters"],
        expected_paths=data["expected_paths"],
        coarse_grid_points_per_axis=data["coarse_grid_points_per_axis"],
        local_descent=LocalDescentConfig(**data["local_descent"]),
        weight_solver=WeightSolverConfig(**data["weight_solver"]),
        stop_tol=data["stop_tol"],
        exclusion_radius_m=data["exclusion_radius_m"],
        mobile_coupling=data["mobile_coupling"],
        auto_lambda_scale=data["auto_lambda_scale"],
        search_area=scene,
    )


def _line_of(text: str, path: list[Any]) -> int | None:
    """Best-effort line number of the innermost named key of an error path."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def parse_run_config(data: Any, text: str = "") -> RunConfig:
    """Validate a decoded config document and build the RunConfig."""
    try:
        validated = RUN_CONFIG_SCHEMA(data)
    except vol.MultipleInvalid as err:
        field_path = ".".join(str(p) for p in err.path)
        line = _line_of(text, err.path)
        raise ConfigError(err.msg, field=field_path, line=line) from err

    experiment = validated["experiment"]
    x0, y0, x1, y1 = experiment["scene_km"]
    scene = Scene(x0 * KM, y0 * KM, x1 * KM, y1 * KM)
    system = system_config_from_dict(validated["system"])
    solver = _solver_config_from_dict(validated["solver"], scene)
    return RunConfig(
        system=system,
        solver=solver,
        experiment=ExperimentConfig(
            conditions=tuple(Condition(name) for name in experiment["condition"]),
            snr_grid_db=tuple(experiment["snr_grid_db"]),
            trials=experiment["trials"],
            seed=experiment["seed"],
            scene=scene,
            num_scatterers=experiment["num_scatterers"],
            gain_model=experiment["gain_model"],
            clearance_m=experiment["clearance_m"],
        ),
        output=OutputConfig(**validated["output"]),
        schema_version=validated["schema_version"],
    )


def load_run_config(path: str | Path) -> RunConfig:
    """Read, validate and build a run configuration file."""
    path = Path(path)
    _LOGGER.debug("Loading run config from %s", path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"Cannot read config file {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"Invalid JSON: {err.msg}", line=err.lineno) from err
    return parse_run_config(data, text)
