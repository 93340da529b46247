"""Joint recursive marginal quantization for two-factor stochastic volatility models."""
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    InversionError,
    SingularMatrixError,
)
from .model import REFERENCE_PRESETS, ModelSpec, PresetParams, preset
from .rmq1d import BoundaryMode, NewtonSettings, Quantizer1D, init_gaussian_quantizer, rmq_step

__version__ = "0.1.0"
