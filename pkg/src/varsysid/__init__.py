"""Variational identification of continuous-discrete stochastic models.

Maximum-likelihood parameter estimation for systems with process and
measurement noise: the evidence lower bound over a steady-state
Markov-Gaussian assumed density is maximized with sigma-point quadrature and
an unconstrained log-Cholesky packing, from zero initial guesses. An exact
linear-Gaussian filter/smoother provides both the verification oracle and
the steady-state one-step predictions used in model evaluation.
"""

from .data import Dataset, make_dataset
from .elbo import (DIFFUSE, ElboBreakdown, InitialStatePrior, elbo_gradient,
                   elbo_value, elbo_value_and_gradient)
from .errors import (ConfigError, DataFormatError, NonFiniteError,
                     NonStationaryError, NumericalError,
                     SingularCovarianceError, VarsysidError)
from .gauss_markov import (GeneralGaussMarkov, SteadyStateGaussMarkov,
                           stationary_marginal)
from .kalman import (FilterResult, LgssDiscrete, kf_loglik, predict_one_step,
                     rts_smoother, steady_state_kf)
from .model import (DiscretizedTransition, LtiModel, Model, ModelDims,
                    em_process_cov, em_transition_mean, measurement_logpdf,
                    transition_logpdf)
from .optimize import (EstimationResult, OptimizerOptions, OptimizerReport,
                       maximize, smooth)
from .packing import GeneralLayout, SteadyStateLayout, make_layout, pack
from .sigma_points import SigmaSet, expect_logpdf, generate
from .simulate import (EvaluationArtifacts, SimConfig, evaluate,
                       free_simulation, simulate_sde, synthetic_dataset)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
