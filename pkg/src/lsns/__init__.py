"""Pseudo-spectral simulator and diagnostics for the Leray-regularized 3-D
stochastic Navier-Stokes system on the unit torus."""

__version__ = "0.1.0"

from .errors import BlowUpError, ConfigurationError, GridMismatchError
from .spectral import Grid, ScalarField, SpectralField

__all__ = [
    "__version__",
    "BlowUpError", "ConfigurationError", "GridMismatchError",
    "Grid", "ScalarField", "SpectralField",
]
