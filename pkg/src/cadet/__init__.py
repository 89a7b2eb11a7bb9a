"""cadet: does a coded aperture help or hurt drive-by source detection?

Monte Carlo simulator and detection library for comparing masked
(coded-aperture) and unmasked gamma detector arrays on synthetic
background surveys: per-observation scoring, spatial score fusion, and
ROC / localization evaluation.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig
from .errors import CadetError, ConfigError, DataError, NumericError, ParameterError

__all__ = [
    "CadetError",
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "NumericError",
    "ParameterError",
    "__version__",
]
