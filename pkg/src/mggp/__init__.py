"""Gaussian processes over R^p x {finite groups}.

Covariance families coupling a Euclidean input with a group label, validity
checks for them, maximum-likelihood and Bayesian inference, prediction, and
seeded simulation scenarios.
"""

from .estimator import MultiGroupGPRegressor
from .exceptions import (
    ConfigError,
    DesignSingularError,
    FitFailedError,
    GenerationError,
    InputValidationError,
    InvalidDensityError,
    MggpError,
    NotPositiveDefiniteError,
    UnsupportedMetricError,
    UnsupportedParameterError,
)
from .gp import (
    GroupedDataset,
    NoiseSpec,
    PredictiveDistribution,
    cholesky_with_jitter,
    dataset_from_csv,
    dataset_to_csv,
    group_intercept_design,
    log_marginal_likelihood,
    log_marginal_likelihood_gradient,
    predict,
    recover_latent,
)
from .groups import GramFacts, GroupSpace, discrete_metric, gram_facts, simplex_embedding
from .inference import (
    FitResult,
    McmcChain,
    PriorSpec,
    fit_mle,
    log_posterior,
    pairwise_distance_learning,
    posterior_predictive_samples,
    sample_mcmc,
    split_rhat,
)
from .kernels import (
    FAMILIES,
    CompositeKernel,
    HierarchicalGP,
    MultiGroupCauchy,
    MultiGroupCauchyAlt,
    MultiGroupExponential,
    MultiGroupExponentialCross,
    MultiGroupGaussianCross,
    MultiGroupKernel,
    MultiGroupMatern,
    MultiGroupRBF,
    MultiGroupRBFAlt,
    PhiSpec,
    PsiSpec,
    SeparableHomogeneous,
    SeparatedGP,
    UnionGP,
    kernel_from_dict,
    kernel_to_dict,
)
from .simulate import ScenarioSpec, generate, imbalanced_scenario
from .validation import (
    PDReport,
    check_categorical_matrix,
    check_homogeneous_bound,
    check_semi_stationary_spectral,
    check_two_group_spectral,
    monte_carlo_pd,
    rbf_spectral_densities,
)

__version__ = "0.1.0"
