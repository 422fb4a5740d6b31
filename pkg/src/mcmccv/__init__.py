"""Control variates for post-processing MCMC output."""

__version__ = "0.1.0"

from .chain import ChainBundle, ChainRecord, IntegrandSpec, load_chain_dir, save_chain_dir  # noqa: E402
from .errors import (  # noqa: E402
    ConfigError,
    DataRequirementError,
    McmcCvError,
    NumericalError,
)
from .pipeline import EstimateOptions, parse_method, run_method, sample_from_config  # noqa: E402
from .report import EstimateReport  # noqa: E402

__all__ = [
    "ChainBundle",
    "ChainRecord",
    "ConfigError",
    "DataRequirementError",
    "EstimateOptions",
    "EstimateReport",
    "IntegrandSpec",
    "McmcCvError",
    "NumericalError",
    "load_chain_dir",
    "parse_method",
    "run_method",
    "sample_from_config",
    "save_chain_dir",
    "__version__",
]
