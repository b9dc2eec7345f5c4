"""Simulation and analysis of PSA-preamplified homodyne EPR measurements.

Submodules
----------
gaussian
    Covariance-matrix engine for multimode Gaussian states.
spectral
    Squeezing spectra, detection transfer chain and channel PSD matrices.
synth
    Seeded synthesis of band-limited multichannel quadrature traces.
analysis
    Noise powers, auto-correlations, wavepacket variances, Duan criterion.
fit
    Two-parameter efficiency fit against gain-swept measurements.
lock
    Time-multiplexed phase-lock residual model.
"""
from eprsim.errors import ConfigError, DegenerateReferenceError, FitError, ModelError
from eprsim.kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DegenerateReferenceError",
    "FitError",
    "ModelError",
    "__version__",
]
