"""Riemannian Gaussians and constrained Gaussian mixtures on the hyperboloid model.

Submodules
----------
geometry     Lorentz model primitives (distance, exp/log maps, Poincare charts).
normalizer   Normalizing constant ``Z_d(beta)`` and its log-derivatives.
gaussian     Density, sampling, MM barycenter and weighted maximum likelihood.
mixture      EM / generalized EM with a scale box, initialization, model selection.
metrics      Clustering agreement metrics and median/IQR summaries.
simulation   Monte Carlo study harnesses.
io           CSV / JSON formats.
cli          ``hypermix`` command-line entry point.
"""

__version__ = "0.1.0"

from .errors import ContractError, DomainError, HypermixError, PrecisionLossError, SamplingError
from .gaussian import GaussianParams, log_density, sample, weighted_barycenter, weighted_mle
from .geometry import WeightedSample, distance, exp_map, from_poincare, log_map, origin, to_poincare
from .mixture import FitConfig, FitReport, MixtureParams, fit, information_criteria, select_k
from .normalizer import RadialModel, build_grid, grid_for_box, log_z_quadrature, z_closed_form, z_quadrature

__all__ = [
    "ContractError",
    "DomainError",
    "FitConfig",
    "FitReport",
    "GaussianParams",
    "HypermixError",
    "MixtureParams",
    "PrecisionLossError",
    "RadialModel",
    "SamplingError",
    "WeightedSample",
    "build_grid",
    "distance",
    "exp_map",
    "fit",
    "from_poincare",
    "grid_for_box",
    "information_criteria",
    "log_density",
    "log_map",
    "log_z_quadrature",
    "origin",
    "sample",
    "select_k",
    "to_poincare",
    "weighted_barycenter",
    "weighted_mle",
    "z_closed_form",
    "z_quadrature",
]
