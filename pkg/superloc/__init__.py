"""Super-resolved MS localisation from multi-BS OFDM measurements.

The solver treats LoS and scattered paths alike (a LoS path is a virtual
scatter at the MS) and recovers the MS and the scatterers jointly with an
alternating descent conditional gradient method.
"""

__version__ = "1.0.0"

from .config import RunConfig, SolverConfig, SystemConfig, load_run_config  # noqa: E402
from .exceptions import SuperlocError  # noqa: E402
from .harness import extract_ms, generate_scenario, rmse, run_monte_carlo  # noqa: E402
from .models import CandidateSolution, Condition, Location, MeasurementSet  # noqa: E402
from .signal import add_awgn, synthesize  # noqa: E402
from .solver import adcg_solve  # noqa: E402

__all__ = [
    "CandidateSolution",
    "Condition",
    "Location",
    "MeasurementSet",
    "RunConfig",
    "SolverConfig",
    "SuperlocError",
    "SystemConfig",
    "__version__",
    "adcg_solve",
    "add_awgn",
    "extract_ms",
    "generate_scenario",
    "load_run_config",
    "rmse",
    "run_monte_carlo",
    "synthesize",
]
