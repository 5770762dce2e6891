"""Simulation toolkit for SQUID-coupled transmon circuits."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .circuit import (
    ChainParams,
    CircuitParams,
    FluxBias,
    GradiometricBias,
    HamiltonianSpec,
    ParameterError,
    SpectatorParams,
)
from .spectrum import LabelingError, NoIdlePoint, PhysicsError, Spectrum

__all__ = [
    "ChainParams",
    "CircuitParams",
    "FluxBias",
    "GradiometricBias",
    "HamiltonianSpec",
    "LabelingError",
    "NoIdlePoint",
    "ParameterError",
    "PhysicsError",
    "SpectatorParams",
    "Spectrum",
    "__version__",
]
