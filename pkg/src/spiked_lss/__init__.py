"""Gaussian limits of linear spectral statistics for generalized spiked sample covariance matrices."""

from .config import RunConfig, parse_config
from .contour import (
    ContourSpec,
    QuadratureGrid,
    build_contour,
    build_contour_pair,
    build_grid,
    bulk_cov,
    bulk_cov_matrix,
    bulk_mean,
    centering_integral,
    correction_term,
    finite_spike_correction,
    quadrature_convergence,
)
from .estimator import SpikedLSS
from .exceptions import (
    ConfigError,
    ContourError,
    ConvergenceError,
    DomainError,
    SimulationError,
    SolverError,
    SpectrumError,
    SpikedLSSError,
)
from .kernels import Kernel, assumption6_check, parse_kernel
from .montecarlo import SampleConfig, SimulationReport, form_B, ks_normal, lss_statistic, run_experiment, sample_B
from .spectrum import (
    BulkDistribution,
    MomentProfile,
    PopulationSpectrum,
    SpikeGroup,
    build_H_n,
    phi,
    phi_prime,
    resolve_spikes,
    validate_assumptions,
)
from .spiked import CltPrediction, SpikedQuantities, clt_prediction, gamma_law, pi_x, rho, spiked_quantities
from .stieltjes import SilversteinSolution, SupportInterval, m_under_real, solve_m_under, support_edges

__all__ = [
    "RunConfig",
    "parse_config",
    "ContourSpec",
    "QuadratureGrid",
    "build_contour",
    "build_contour_pair",
    "build_grid",
    "bulk_cov",
    "bulk_cov_matrix",
    "bulk_mean",
    "centering_integral",
    "correction_term",
    "finite_spike_correction",
    "quadrature_convergence",
    "SpikedLSS",
    "ConfigError",
    "ContourError",
    "ConvergenceError",
    "DomainError",
    "SimulationError",
    "SolverError",
    "SpectrumError",
    "SpikedLSSError",
    "Kernel",
    "assumption6_check",
    "parse_kernel",
    "SampleConfig",
    "SimulationReport",
    "form_B",
    "ks_normal",
    "lss_statistic",
    "run_experiment",
    "sample_B",
    "BulkDistribution",
    "MomentProfile",
    "PopulationSpectrum",
    "SpikeGroup",
    "build_H_n",
    "phi",
    "phi_prime",
    "resolve_spikes",
    "validate_assumptions",
    "CltPrediction",
    "SpikedQuantities",
    "clt_prediction",
    "gamma_law",
    "pi_x",
    "rho",
    "spiked_quantities",
    "SilversteinSolution",
    "SupportInterval",
    "m_under_real",
    "solve_m_under",
    "support_edges",
]

__version__ = "0.1.0"
