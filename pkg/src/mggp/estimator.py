"""Scikit-learn style regressor wrapping the multi-group GP machinery.

The estimator keeps the usual ``fit`` / ``predict`` / ``get_params`` surface
so it composes with pipelines and model-selection utilities; group labels
travel alongside ``X`` as an extra argument of both methods.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from ._utils import as_matrix, as_vector, require
from .exceptions import InputValidationError
from .gp import GroupedDataset, NoiseSpec, predict as gp_predict
from .groups import GroupSpace, discrete_metric
from .inference import fit_mle
from .kernels import FAMILIES

__all__ = ["MultiGroupGPRegressor"]


class MultiGroupGPRegressor(BaseEstimator, RegressorMixin):
    """Gaussian-process regression over points paired with group labels.

    Parameters
    ----------
    kernel : str
        Covariance family name (a key of ``mggp.kernels.FAMILIES``).
    kernel_params : dict or None
        Fixed starting hyperparameters forwarded to the family constructor.
    distances : array-like or None
        k x k group distance matrix; defaults to the equidistant metric.
    per_group_noise : bool
        Learn one noise variance per group instead of a shared one.
    free_params : sequence of str or None
        Parameters to optimize; defaults to every live kernel parameter plus
        the noise variances.
    n_restarts, max_iter, grad_tol : optimizer controls.
    center_per_group : bool
        Subtract per-group training means and add them back at prediction.
    predict_mode : {"response", "latent"}
        Whether predictive variances include the noise variance.
    random_state : int
        Seed for the optimizer restarts.
    """

    def __init__(
        self,
        kernel="mg_rbf",
        kernel_params=None,
        distances=None,
        per_group_noise=False,
        free_params=None,
        n_restarts=5,
        max_iter=150,
        grad_tol=1e-6,
        center_per_group=False,
        predict_mode="response",
        random_state=0,
    ):
        self.kernel = kernel
        self.kernel_params = kernel_params
        self.distances = distances
        self.per_group_noise = per_group_noise
        self.free_params = free_params
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.center_per_group = center_per_group
        self.predict_mode = predict_mode
        self.random_state = random_state

    def _encode_groups(self, groups, allow_new=False):
        labels = [str(g) for g in np.asarray(groups).reshape(-1)]
        if allow_new:
            return np.array([self.space_.index_of(lab) for lab in labels])
        seen = sorted(set(labels))
        return seen, np.array([seen.index(lab) for lab in labels])

    def fit(self, X, y, groups):
        """Fit hyperparameters by maximum marginal likelihood."""
        X = as_matrix(X)
        y = as_vector(y, "y", length=X.shape[0])
        seen, g = self._encode_groups(groups)
        k = len(seen)
        if self.distances is not None:
            d = np.asarray(self.distances, dtype=float)
            require(d.shape == (k, k), f"distances must be {k}x{k} for the observed groups")
            self.space_ = GroupSpace(labels=tuple(seen), distances=d)
        else:
            self.space_ = discrete_metric(k, seen)
        if self.kernel not in FAMILIES:
            raise InputValidationError(f"unknown kernel family {self.kernel!r}")
        template = FAMILIES[self.kernel](
            self.space_, X.shape[1], **(self.kernel_params or {})
        )
        if self.per_group_noise:
            noise0 = NoiseSpec.per_group(np.full(k, 0.1))
        else:
            noise0 = NoiseSpec.shared(0.1)
        data = GroupedDataset(X=X, groups=g, y=y)
        if self.center_per_group:
            offsets = np.array([y[g == j].mean() if np.any(g == j) else 0.0 for j in range(k)])
            data = GroupedDataset(X=X, groups=g, y=y - offsets[g])
            self.offsets_ = offsets
        else:
            self.offsets_ = np.zeros(k)
        result = fit_mle(
            template,
            data,
            noise0,
            free=self.free_params,
            restarts=self.n_restarts,
            max_iter=self.max_iter,
            grad_tol=self.grad_tol,
            seed=self.random_state,
        )
        self.kernel_ = result.kernel
        self.noise_ = result.noise
        self.fit_result_ = result
        self.train_data_ = data
        return self

    def _check_fitted(self):
        if not hasattr(self, "kernel_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X, groups, return_std=False):
        """Predictive mean (and optionally standard deviation) at new points."""
        self._check_fitted()
        X = as_matrix(X, n_cols=self.kernel_.p)
        qg = self._encode_groups(groups, allow_new=True)
        dist = gp_predict(
            self.kernel_,
            self.train_data_,
            self.noise_,
            X,
            qg,
            mode=self.predict_mode,
        )
        mean = dist.mean + self.offsets_[qg]
        if return_std:
            return mean, np.sqrt(dist.variance)
        return mean

    def log_marginal_likelihood(self):
        self._check_fitted()
        return float(self.fit_result_.log_lik)
