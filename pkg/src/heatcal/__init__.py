"""Heat-index ensemble calibration (EMOS, ECC, GEV, MLP) and verification."""

from .config import RunConfig, validate_config
from .pipeline import run_pipeline

__version__ = "0.1.0"
__all__ = ["RunConfig", "validate_config", "run_pipeline", "__version__"]
