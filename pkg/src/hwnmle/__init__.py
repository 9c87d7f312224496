"""Profile maximum likelihood for the anisotropic hyperbolic wrapped normal."""
from ._backend import BACKEND
from .calibration import StudyConfig, StudyRow, load_config, make_truth, run_study
from .estimator import FitError, FitOptions, FitResult, fit, frechet_mean, two_step_init
from .fisher import Chart, InfoMatrices, chi_square_quantile, mc_fisher_information, params_from_chart
from .geometry import (
    HyperPoint,
    TangentVec,
    distance,
    embed_tangent_at_origin,
    exp_map,
    exp_origin,
    log_map,
    lorentz_inner,
    origin,
    parallel_transport,
    phi,
    project_to_hyperboloid,
    tangent_coords,
)
from .model import HwnParams, Sample, density, log_density, log_likelihood, sample
from .profile import covariance_profile, profiled_objective, tangent_scatter
from .spd import Shell, clip_spectrum, make_test_covariance

__version__ = "0.1.0"
