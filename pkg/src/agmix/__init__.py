"""Adaptive Gaussian-mixture uncertainty propagation with loss-sensitive seeding."""
from .dynamics import DynamicsModel, get_model, linear_model, pure_diffusion_model, sine_model
from .exceptions import ConfigError, CovarianceError, NumericalError, UnsupportedModelError
from .experiment import ExperimentConfig, load_config, run_experiment, run_method
from .fpke_weights import FPKEWeightAdapter, QuadratureSpec, build_L_matrix, residual_at, solve_weight_qp
from .metrics import RunReport, expected_loss_mixture, isd, wisd
from .mixture import GaussianComponent, GaussianMixture, LossFunction, eval_density, mixture_moments
from .propagate import PropagationSchedule, propagate_mixture, propagate_moments
from .qp import solve_simplex_qp
from .seeder import SeederConfig, backprop_seed, progressive_selection, solve_alpha, solve_gamma
from .truth import FPKEGridSpec, expected_loss_on_grid, solve_fpke

__version__ = "0.1.0"
