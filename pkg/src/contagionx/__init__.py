"""Default contagion on interbank exposure networks."""

__version__ = "0.1.0"

from .analytic import AnalyticInputs, mean_cluster_size, mean_cluster_size_uncorrelated  # noqa: E402
from .errors import (ContagionError, InputValidationError, NumericalError,  # noqa: E402
                     PercolativePhaseError)
from .ledger import BankRecord, Exposure, ExposureSnapshot, compute_car, net_exposures  # noqa: E402
from .stress import StressParams, run_cascade, sweep  # noqa: E402
from .syngen import GeneratorConfig, generate  # noqa: E402
from .topology import bow_tie_decompose  # noqa: E402

__all__ = [
    "AnalyticInputs", "BankRecord", "ContagionError", "Exposure", "ExposureSnapshot",
    "GeneratorConfig", "InputValidationError", "NumericalError", "PercolativePhaseError",
    "StressParams", "bow_tie_decompose", "compute_car", "generate", "mean_cluster_size",
    "mean_cluster_size_uncorrelated", "net_exposures", "run_cascade", "sweep",
]
