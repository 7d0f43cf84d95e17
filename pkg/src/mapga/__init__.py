"""MAP estimation solvers for linear inverse problems with analytic
diffusion priors (Gaussian and Gaussian-mixture score/denoiser backends)."""

from .errors import ConfigError, ContractError, DataError, NumericalError
from .estimators import (
    MapGAPGDMReconstructor,
    MapGAReconstructor,
    NaiveMAPReconstructor,
    PGDMReconstructor,
)
from .operators import (
    InpaintingMask,
    Measurement,
    adjoint,
    apply,
    make_mask,
    simulate_measurement,
)
from .oracles import (
    GaussianPosterior,
    GridSpec,
    gaussian_posterior_logpdf,
    gaussian_posterior_map,
    gmm_grid_map,
)
from .pfode import (
    ConsistencyFn,
    OdeConfig,
    consistency,
    consistency_vjp,
    gaussian_consistency_closed_form,
    pf_ode_rhs,
)
from .priors import GaussianMixture, PriorModel, fit_empirical_gaussian
from .schedule import NoiseSchedule, TimeGrid, edm_time_grid
from .solvers import (
    SolveResult,
    SolverConfig,
    default_solver_config,
    grad_log_likelihood,
    grad_log_prior,
    map_ga,
    map_ga_pgdm,
    naive_map_x0,
    pgdm_baseline,
    posterior_vjp_step,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "NumericalError",
    "ConsistencyFn",
    "GaussianMixture",
    "GaussianPosterior",
    "GridSpec",
    "InpaintingMask",
    "MapGAPGDMReconstructor",
    "MapGAReconstructor",
    "Measurement",
    "NaiveMAPReconstructor",
    "NoiseSchedule",
    "OdeConfig",
    "PGDMReconstructor",
    "PriorModel",
    "SolveResult",
    "SolverConfig",
    "TimeGrid",
    "adjoint",
    "apply",
    "consistency",
    "consistency_vjp",
    "default_solver_config",
    "edm_time_grid",
    "fit_empirical_gaussian",
    "gaussian_consistency_closed_form",
    "gaussian_posterior_logpdf",
    "gaussian_posterior_map",
    "gmm_grid_map",
    "grad_log_likelihood",
    "grad_log_prior",
    "make_mask",
    "map_ga",
    "map_ga_pgdm",
    "naive_map_x0",
    "pf_ode_rhs",
    "pgdm_baseline",
    "posterior_vjp_step",
    "simulate_measurement",
]
