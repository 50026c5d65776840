"""Gaussian-cumulant simulation of quantum solitons in damped Kerr fibers.

Submodules: ``lattice`` (grid, state, initial conditions), ``dynamics``
(split-step moment propagation), ``fock`` (truncated Fock-space oracle),
``spectral`` (photon-number statistics), ``windows`` (bandpass optimizers),
``io``, ``pipeline`` and ``cli``.
"""

__version__ = "1.0.0"

from .lattice import (  # noqa: E402
    GaussianFieldState,
    GridSpec,
    SimulationConfig,
    SpectralWindow,
    make_fundamental_soliton,
    total_photon_number,
)

__all__ = [
    "GaussianFieldState",
    "GridSpec",
    "SimulationConfig",
    "SpectralWindow",
    "make_fundamental_soliton",
    "total_photon_number",
    "__version__",
]
