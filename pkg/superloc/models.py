"""Value types shared by the superloc modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):  # type: ignore[no-redef]
        """Backport of enum.StrEnum: str() and format() give the value."""

        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True, slots=True)
class Location:
    """A 2-D point in metres (MS, scatter or BS position)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Location must be finite, got ({self.x}, {self.y})")

    @classmethod
    def from_array(cls, values: np.ndarray | tuple[float, float]) -> Location:
        """Build a location from any length-2 sequence."""
        return cls(float(values[0]), float(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def distance_to(self, other: Location) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def shifted(self, dx: float, dy: float) -> Location:
        return Location(self.x + dx, self.y + dy)


@dataclass(frozen=True, slots=True)
class PathGeometry:
    """Time and direction of arrival of one path at one BS."""

    toa: float
    doa: float


@dataclass(frozen=True, slots=True)
class Scene:
    """Axis-aligned rectangle in metres holding the MS and the scatterers."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError("Scene rectangle is empty", field="scene")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, point: Location) -> bool:
        return (
            self.x_min <= point.x <= self.x_max and self.y_min <= point.y <= self.y_max
        )

    def bounds(self) -> list[tuple[float, float]]:
        """Per-coordinate (low, high) pairs for a 2-D point."""
        return [(self.x_min, self.x_max), (self.y_min, self.y_max)]


class Condition(StrEnum):
    """Propagation condition of a scenario."""

    LOS = "los"
    NLOS = "nlos"
    OLOS = "olos"
    MIXED = "mixed"


@dataclass(frozen=True, slots=True)
class Path:
    """One propagation path to a BS; a LoS path carries no scatter."""

    scatter: Location | None
    gain: complex

    @property
    def is_los(self) -> bool:
        return self.scatter is None


@dataclass(frozen=True)
class Scenario:
    """Ground truth: MS location, scatterers and per-BS paths."""

    mobile: Location
    per_bs_paths: tuple[tuple[Path, ...], ...]
    condition: Condition
    seed: int
    scatterers: tuple[Location, ...] = ()

    @property
    def num_bs(self) -> int:
        return len(self.per_bs_paths)

    @property
    def has_los(self) -> bool:
        return any(path.is_los for paths in self.per_bs_paths for path in paths)

    def truth_scatterers(self) -> list[Location]:
        """Canonical scatter set: observed scatterers plus one virtual scatter."""
        seen: list[Location] = []
        for scatter in self.scatterers:
            if any(
                path.scatter == scatter for paths in self.per_bs_paths for path in paths
            ):
                seen.append(scatter)
        if self.has_los:
            seen.append(self.mobile)
        return seen


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Per-BS complex N_R x N data matrices."""

    per_bs: tuple[np.ndarray, ...]
    snr_db: float | None = None
    noise_seed: int | None = None

    @property
    def num_bs(self) -> int:
        return len(self.per_bs)

    def energy(self) -> float:
        return float(sum(np.vdot(y, y).real for y in self.per_bs))


@dataclass(frozen=True, slots=True)
class AtomParams:
    """Support point (l_t, l_s) of an atomic measure."""

    mobile: Location
    scatter: Location

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.mobile.x, self.mobile.y, self.scatter.x, self.scatter.y], dtype=float
        )

    @classmethod
    def from_array(cls, values: np.ndarray) -> AtomParams:
        return cls(Location.from_array(values[0:2]), Location.from_array(values[2:4]))


@dataclass(frozen=True, eq=False)
class CandidateSolution:
    """Atoms as a (K, 4) array of [l_t^x, l_t^y, l_s^x, l_s^y] and (K, J) weights."""

    params: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.params.ndim != 2 or self.params.shape[1] != 4:
            raise ValueError(f"params must be (K, 4), got {self.params.shape}")
        if self.weights.ndim != 2 or self.weights.shape[0] != self.params.shape[0]:
            raise ValueError(
                f"weights rows {self.weights.shape} do not match "
                f"{self.params.shape[0]} atoms"
            )

    @classmethod
    def empty(cls, num_bs: int) -> CandidateSolution:
        return cls(np.zeros((0, 4)), np.zeros((0, num_bs), dtype=complex))

    @property
    def num_atoms(self) -> int:
        return self.params.shape[0]

    @property
    def num_bs(self) -> int:
        return self.weights.shape[1]

    def group_norms(self) -> np.ndarray:
        """Per-atom l2 norm of the cross-BS weight vector."""
        return np.linalg.norm(self.weights, axis=1)


@dataclass(frozen=True, eq=False)
class WeightFit:
    """Result of the group-sparse weight solve."""

    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass(frozen=True, slots=True)
class IterationRecord:
    """Regularised loss trace of one ADCG outer iteration."""

    iteration: int
    num_atoms: int
    loss_after_weights: float
    loss_after_improve: float


@dataclass(frozen=True, eq=False)
class AdcgResult:
    """Final candidate of an ADCG run with its convergence record."""

    candidate: CandidateSolution
    converged: bool
    iterations: int
    history: tuple[IterationRecord, ...] = ()
    initial_loss: float = 0.0

    @property
    def monotone(self) -> bool:
        """True when the loss after each weights step never increased."""
        previous = self.initial_loss
        for record in self.history:
            if record.loss_after_weights > previous * (1 + 1e-9) + 1e-12:
                return False
            previous = record.loss_after_improve
        return True


@dataclass(frozen=True, slots=True)
class MobileEstimate:
    """MS location reduced from the atoms' l_t components."""

    location: Location
    ambiguous: bool
    spread_m: float


@dataclass(frozen=True)
class Association:
    """Greedy estimate-to-truth scatter matching."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_estimates: tuple[int, ...] = ()
    unmatched_truths: tuple[int, ...] = ()


@dataclass(frozen=True)
class RmseBreakdown:
    """RMSE of one trial with the distances it was computed from."""

    rmse_m: float
    matched_only_rmse_m: float
    ms_error_m: float
    per_scatter_errors_m: tuple[float, ...]


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one Monte Carlo trial."""

    condition: Condition
    snr_db: float
    trial: int
    rmse_m: float
    ms_error_m: float
    per_scatter_errors_m: tuple[float, ...] = ()
    matched_only_rmse_m: float = math.nan
    converged: bool = False
    ambiguous: bool = False
    failed: bool = False
    monotone: bool = True
    runtime_s: float = 0.0


@dataclass(frozen=True)
class SummaryRow:
    """Aggregate over the trials of one (condition, SNR) point."""

    condition: Condition
    snr_db: float
    mean_rmse_m: float
    std_rmse_m: float
    matched_only_rmse_m: float
    # scored trials; failed ones only count in failed_count
    trials: int
    ambiguous_count: int
    failed_count: int
    nonconverged_count: int


@dataclass(frozen=True)
class MonteCarloReport:
    """Per-trial records and the per-point summary table of a sweep."""

    trials: tuple[TrialResult, ...]
    summary: tuple[SummaryRow, ...] = field(default_factory=tuple)

    @property
    def any_nonconverged(self) -> bool:
        return any(not trial.converged for trial in self.trials)
