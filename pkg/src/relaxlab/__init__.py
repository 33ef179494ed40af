"""Quantitative convergence lab for the linear relaxation Boltzmann equation on the torus."""

__version__ = "0.1.0"

from .certificate import RateCertificate, RegimeSpec, build_certificate  # noqa: E402
from .control import GccReport, GridSpec, gcc_kappa, spectral_constants  # noqa: E402
from .geometry import FlowConfig, Potential, flow, potential_bounds  # noqa: E402
from .problem import ScatterProblem  # noqa: E402

__all__ = [
    "FlowConfig", "GccReport", "GridSpec", "Potential", "RateCertificate", "RegimeSpec",
    "ScatterProblem", "build_certificate", "flow", "gcc_kappa", "potential_bounds",
    "spectral_constants",
]
