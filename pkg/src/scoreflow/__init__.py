"""Numerical laboratory for deterministic reverse-flow sampling of
Gaussian-mixture targets, with total-variation convergence measurement."""

from ._kernels import USING_NUMBA
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunRecord,
    couple_delta_to_steps,
    load_config,
    run_ode_experiment,
    run_pde_experiment,
)
from .fv1d import CflError, DensityField1D, advance, init_from_density, total_variation_grid
from .integrator import (
    EULER,
    HEUN,
    ButcherTableau,
    IntegrationError,
    ParticleEnsemble,
    estimate_order,
    get_tableau,
    integrate,
    step,
    validate,
)
from .metrics import (
    KDEConfig,
    fit_loglog,
    fit_slope,
    kde_1d,
    moment_errors,
    silverman_bandwidth,
    tv_marginal,
)
from .mixture import DiffusedMixture, GaussianMixture, make_random_mixture, marginalize
from .schedule import NoiseSchedule, TimeGrid, make_grid
from .velocity import ScorePerturbation, VelocityField

__version__ = "0.1.0"
