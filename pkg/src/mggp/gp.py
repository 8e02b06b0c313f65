"""Core Gaussian-process numerics.

Everything routes through one Cholesky factorization of the noisy Gram matrix
per likelihood evaluation: the collapsed log marginal likelihood
``log N(y | F beta, K + D_tau)``, its gradient with respect to log-scale
hyperparameters, generalized-least-squares profiling of the regression
coefficients, posterior prediction at arbitrary (point, group) queries, and
exact draws of the latent process conditional on the data. No matrix inverse
is ever formed explicitly.
"""

import csv
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ._utils import (
    as_group_indices,
    as_matrix,
    as_vector,
    check_square_symmetric,
    positive_scalar,
    require,
)
from .exceptions import (
    DesignSingularError,
    InputValidationError,
    NotPositiveDefiniteError,
)

__all__ = [
    "GroupedDataset",
    "NoiseSpec",
    "PredictiveDistribution",
    "LikelihoodResult",
    "cholesky_with_jitter",
    "log_marginal_likelihood",
    "log_marginal_likelihood_gradient",
    "predict",
    "recover_latent",
    "group_intercept_design",
    "dataset_to_csv",
    "dataset_from_csv",
    "JITTER_LADDER",
]

# Relative jitter levels tried in order when factorizing a noisy Gram matrix.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

# Predictive variances are clamped at zero; clamping beyond this magnitude is
# reported through PredictiveDistribution.clamped.
VARIANCE_CLAMP_REPORT = 1e-8


@dataclass(frozen=True)
class GroupedDataset:
    """Inputs, group indices, responses, and an optional block design matrix.

    ``design`` holds the full n x q matrix whose columns partition into
    per-group blocks; ``design_groups`` maps each column to its group. Row i
    may only be nonzero inside the block of its own group.
    """

    X: np.ndarray
    groups: np.ndarray
    y: np.ndarray
    design: Optional[np.ndarray] = None
    design_groups: Optional[np.ndarray] = None

    def __post_init__(self):
        X = as_matrix(self.X)
        n = X.shape[0]
        groups = np.asarray(self.groups, dtype=int)
        require(groups.shape == (n,), "groups must be one index per row of X")
        require(np.all(groups >= 0), "group indices must be nonnegative")
        y = as_vector(self.y, "y", length=n)
        X.setflags(write=False)
        groups.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "y", y)
        if self.design is not None:
            F = as_matrix(self.design, "design")
            require(F.shape[0] == n, "design must have one row per sample")
            require(self.design_groups is not None, "design needs design_groups")
            dg = np.asarray(self.design_groups, dtype=int)
            require(dg.shape == (F.shape[1],), "design_groups must map each column")
            for i in range(n):
                off_block = dg != groups[i]
                require(
                    not np.any(F[i, off_block] != 0.0),
                    f"design row {i} is nonzero outside its group block",
                )
            F.setflags(write=False)
            dg.setflags(write=False)
            object.__setattr__(self, "design", F)
            object.__setattr__(self, "design_groups", dg)
        else:
            require(self.design_groups is None, "design_groups given without design")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return 0 if self.design is None else self.design.shape[1]

    def group_sizes(self, k=None):
        k = int(k) if k is not None else int(self.groups.max()) + 1 if self.n else 0
        return np.bincount(self.groups, minlength=k)

    def subset(self, mask):
        """Row subset; the design keeps its full column layout."""
        mask = np.asarray(mask)
        if mask.dtype != bool:
            idx = np.asarray(mask, dtype=int)
        else:
            idx = np.where(mask)[0]
        return GroupedDataset(
            X=self.X[idx],
            groups=self.groups[idx],
            y=self.y[idx],
            design=None if self.design is None else self.design[idx],
            design_groups=self.design_groups,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-error variances: one shared tau^2 or one per group."""

    mode: str
    values: np.ndarray

    def __post_init__(self):
        require(self.mode in ("shared", "per-group"), f"unknown noise mode {self.mode!r}")
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.mode == "shared":
            require(vals.shape == (1,), "shared noise takes exactly one value")
        for v in vals:
            positive_scalar(v, "tau2")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def shared(cls, tau2):
        return cls(mode="shared", values=np.array([float(tau2)]))

    @classmethod
    def per_group(cls, tau2s):
        return cls(mode="per-group", values=np.asarray(tau2s, dtype=float))

    def diag_for(self, groups):
        groups = np.asarray(groups, dtype=int)
        if self.mode == "shared":
            return np.full(len(groups), self.values[0])
        require(
            len(groups) == 0 or groups.max() < len(self.values),
            "group index exceeds per-group noise values",
        )
        return self.values[groups]

    def free_names(self):
        if self.mode == "shared":
            return ("tau2",)
        return tuple(f"tau2_{j}" for j in range(len(self.values)))

    def with_value(self, name, value):
        if self.mode == "shared":
            require(name == "tau2", f"unknown noise parameter {name!r}")
            return NoiseSpec.shared(value)
        require(name.startswith("tau2_"), f"unknown noise parameter {name!r}")
        j = int(name[len("tau2_"):])
        vals = self.values.copy()
        vals[j] = float(value)
        return NoiseSpec.per_group(vals)

    def get(self, name):
        if self.mode == "shared":
            require(name == "tau2", f"unknown noise parameter {name!r}")
            return float(self.values[0])
        j = int(name[len("tau2_"):])
        return float(self.values[j])


@dataclass(frozen=True)
class PredictiveDistribution:
    """Predictive means and variances at query (point, group) pairs."""

    mean: np.ndarray
    variance: np.ndarray
    query_groups: np.ndarray
    covariance: Optional[np.ndarray] = None
    clamped: bool = False


class LikelihoodResult(NamedTuple):
    value: float
    beta: Optional[np.ndarray]


def cholesky_with_jitter(M):
    """Lower Cholesky factor of M, escalating diagonal jitter until it exists.

    Jitter levels are ``JITTER_LADDER`` times the mean diagonal of M. Returns
    ``(L, jitter)`` with ``L L' = M + jitter I``. Raises
    :class:`NotPositiveDefiniteError` when the ladder is exhausted.
    """
    M = check_square_symmetric(M, "M")
    scale = float(np.mean(np.diag(M))) if M.size else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    attempted = []
    eye = np.eye(M.shape[0])
    for level in JITTER_LADDER:
        jitter = level * scale
        attempted.append(jitter)
        try:
            L = np.linalg.cholesky(M + jitter * eye)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite after jitter up to {attempted[-1]:.3e}",
        ladder=attempted,
    )


def _resolve_beta(L, F, y, beta):
    """Residual y - F beta plus the beta actually used, given the factor L.

    ``beta='profiled'`` computes the generalized-least-squares coefficients
    ``(F' Sigma^-1 F)^-1 F' Sigma^-1 y`` through triangular solves.
    """
    if F is None:
        if isinstance(beta, str) or beta is None:
            return y, None
        raise InputValidationError("beta supplied but the dataset has no design")
    if beta is None:
        return y, None
    if isinstance(beta, str):
        require(beta == "profiled", f"beta must be an array, None, or 'profiled'")
        W = solve_triangular(L, F, lower=True)
        c = solve_triangular(L, y, lower=True)
        G = W.T @ W
        try:
            Lg = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise DesignSingularError(
                "F' Sigma^-1 F is singular; the design is rank-deficient"
            ) from None
        beta_hat = cho_solve((Lg, True), W.T @ c)
        return y - F @ beta_hat, beta_hat
    beta = as_vector(beta, "beta", length=F.shape[1])
    return y - F @ beta, beta


def _assemble(kernel, data, noise):
    K = kernel.gram(data.X, data.groups)
    Sigma = K + np.diag(noise.diag_for(data.groups))
    return K, Sigma


def log_marginal_likelihood(kernel, data, noise, beta="profiled"):
    """Collapsed log marginal likelihood ``log N(y | F beta, K + D_tau)``.

    The log-determinant comes from the Cholesky diagonal and the quadratic
    form from triangular solves. With ``beta='profiled'`` the GLS coefficients
    are computed first and returned alongside the value; without a design the
    mean is zero.
    """
    _, Sigma = _assemble(kernel, data, noise)
    L, _ = cholesky_with_jitter(Sigma)
    resid, beta_used = _resolve_beta(L, data.design, data.y, beta)
    w = solve_triangular(L, resid, lower=True)
    value = (
        -0.5 * data.n * np.log(2.0 * np.pi)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * float(w @ w)
    )
    return LikelihoodResult(value=value, beta=beta_used)


def _grad_components(kernel, data, noise, free, beta):
    _, Sigma = _assemble(kernel, data, noise)
    L, _ = cholesky_with_jitter(Sigma)
    resid, beta_used = _resolve_beta(L, data.design, data.y, beta)
    alpha = cho_solve((L, True), resid)
    Sinv = cho_solve((L, True), np.eye(data.n))
    w = solve_triangular(L, resid, lower=True)
    value = (
        -0.5 * data.n * np.log(2.0 * np.pi)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * float(w @ w)
    )
    grads = {}
    noise_names = set(noise.free_names())
    for name in free:
        if name in noise_names:
            if noise.mode == "shared":
                weight = np.ones(data.n)
            else:
                j = int(name[len("tau2_"):])
                weight = (data.groups == j).astype(float)
            raw = 0.5 * (float(alpha @ (weight * alpha)) - float(weight @ np.diag(Sinv)))
            grads[name] = raw * noise.get(name)
        else:
            G = kernel.gram_gradient(data.X, data.groups, name)
            raw = 0.5 * (float(alpha @ G @ alpha) - float(np.sum(Sinv * G)))
            grads[name] = raw * float(kernel.get_params()[name])
    return value, grads, beta_used


def log_marginal_likelihood_gradient(kernel, data, noise, free, beta="profiled"):
    """Gradient of the collapsed likelihood with respect to log parameters.

    Uses ``d/d theta = 1/2 alpha' (dSigma/d theta) alpha - 1/2 tr(Sigma^-1
    dSigma/d theta)`` with ``alpha = Sigma^-1 (y - F beta)``, chain-ruled onto
    the log scale. With profiled coefficients this equals the gradient of the
    profile likelihood (the partial derivative through beta-hat vanishes at
    the GLS optimum). ``free`` names kernel parameters and/or ``tau2`` /
    ``tau2_j``.
    """
    _, grads, _ = _grad_components(kernel, data, noise, free, beta)
    return grads


def log_marginal_likelihood_and_gradient(kernel, data, noise, free, beta="profiled"):
    """Value and log-scale gradient in one factorization."""
    value, grads, beta_used = _grad_components(kernel, data, noise, free, beta)
    return value, grads, beta_used


def _center_offsets(data, k):
    """Per-group training means (zero for groups with no training rows)."""
    offsets = np.zeros(k)
    for j in range(k):
        mask = data.groups == j
        if np.any(mask):
            offsets[j] = float(np.mean(data.y[mask]))
    return offsets


def predict(
    kernel,
    data,
    noise,
    queries,
    query_groups,
    beta=None,
    query_design=None,
    mode="response",
    center_per_group=False,
    want_covariance=False,
):
    """Posterior predictive distribution at query (point, group) pairs.

    The mean is ``F* beta + K*(K + D_tau)^-1 (y - F beta)`` and the variance
    is the prior variance minus the explained part; ``mode='response'`` adds
    the query group's noise variance, ``mode='latent'`` does not. Query groups
    may be unobserved in the training data. ``center_per_group`` subtracts
    per-group training means first and adds them back afterwards (only
    available without a design); combined with ``beta=None`` and
    ``mode='latent'`` this is the benchmark preset
    ``K*(K + D_tau)^-1 y_centered + group mean``.
    """
    require(mode in ("response", "latent"), f"unknown prediction mode {mode!r}")
    queries = as_matrix(queries, "queries", n_cols=kernel.p)
    qg = as_group_indices(query_groups, kernel.space.k, length=queries.shape[0], name="query_groups")

    if center_per_group:
        require(data.design is None, "per-group centering is for designless data")
        offsets = _center_offsets(data, kernel.space.k)
        data = GroupedDataset(X=data.X, groups=data.groups, y=data.y - offsets[data.groups])

    _, Sigma = _assemble(kernel, data, noise)
    L, _ = cholesky_with_jitter(Sigma)
    resid, beta_used = _resolve_beta(L, data.design, data.y, beta)
    v = cho_solve((L, True), resid)

    Kstar = kernel.cross_gram(queries, qg, data.X, data.groups)
    mean = Kstar @ v
    if data.design is not None and beta_used is not None:
        require(
            query_design is not None,
            "query_design is required when the dataset has a design",
        )
        Fq = as_matrix(query_design, "query_design", n_cols=data.q)
        mean = mean + Fq @ beta_used
    if center_per_group:
        mean = mean + offsets[qg]

    W = solve_triangular(L, Kstar.T, lower=True)
    prior = kernel.point_variance(qg)
    variance = prior - np.sum(W * W, axis=0)
    clamped = bool(np.any(variance < -VARIANCE_CLAMP_REPORT))
    variance = np.maximum(variance, 0.0)
    if mode == "response":
        variance = variance + noise.diag_for(qg)

    covariance = None
    if want_covariance:
        Kss = kernel.gram(queries, qg)
        covariance = Kss - W.T @ W
        if mode == "response":
            covariance = covariance + np.diag(noise.diag_for(qg))
    return PredictiveDistribution(
        mean=mean,
        variance=variance,
        query_groups=qg,
        covariance=covariance,
        clamped=clamped,
    )


def recover_latent(kernel, data, noise, beta=None, seed=0):
    """One exact draw of the latent process at the training points.

    The conditional given the data and parameters is Gaussian with mean
    ``K (K + D_tau)^-1 (y - F beta)`` and covariance
    ``K - K (K + D_tau)^-1 K`` (equivalently ``(K^-1 + D_tau^-1)^-1``).
    """
    K, Sigma = _assemble(kernel, data, noise)
    L, _ = cholesky_with_jitter(Sigma)
    resid, _ = _resolve_beta(L, data.design, data.y, beta)
    mean = K @ cho_solve((L, True), resid)
    W = solve_triangular(L, K, lower=True)
    M = K - W.T @ W
    M = 0.5 * (M + M.T)
    Lm, _ = cholesky_with_jitter(M)
    rng = np.random.default_rng(seed)
    return mean + Lm @ rng.standard_normal(data.n)


def group_intercept_design(groups, k):
    """Group-membership indicator design: one intercept column per group."""
    groups = np.asarray(groups, dtype=int)
    F = np.zeros((len(groups), k))
    F[np.arange(len(groups)), groups] = 1.0
    return F, np.arange(k)


def _format_float(v):
    return repr(float(v))


def dataset_to_csv(data, space, path):
    """Write ``group,y,x1..xp[,f1..]`` rows; labels come from the space.

    Design columns are stored per row (the values inside the row's own group
    block), which requires every group block to have the same width.
    """
    header = ["group", "y"] + [f"x{i + 1}" for i in range(data.p)]
    q0 = 0
    if data.design is not None:
        widths = {int(np.sum(data.design_groups == j)) for j in range(space.k)}
        require(len(widths) == 1, "CSV export needs equal design widths per group")
        q0 = widths.pop()
        header += [f"f{i + 1}" for i in range(q0)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [space.labels[data.groups[i]], _format_float(data.y[i])]
            row += [_format_float(v) for v in data.X[i]]
            if q0:
                block = data.design_groups == data.groups[i]
                row += [_format_float(v) for v in data.design[i, block]]
            writer.writerow(row)


def dataset_from_csv(path, space):
    """Read a dataset written by :func:`dataset_to_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    require(len(rows) >= 2, "dataset CSV needs a header plus at least one row")
    header = [h.strip() for h in rows[0]]
    require(header[:2] == ["group", "y"], "dataset CSV must start with group,y")
    x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
    f_cols = [i for i, h in enumerate(header) if h.startswith("f")]
    groups, ys, xs, fs = [], [], [], []
    for row in rows[1:]:
        groups.append(space.index_of(row[0]))
        ys.append(float(row[1]))
        xs.append([float(row[i]) for i in x_cols])
        if f_cols:
            fs.append([float(row[i]) for i in f_cols])
    groups = np.array(groups, dtype=int)
    design = None
    design_groups = None
    if f_cols:
        q0 = len(f_cols)
        design = np.zeros((len(groups), q0 * space.k))
        design_groups = np.repeat(np.arange(space.k), q0)
        for i, g in enumerate(groups):
            design[i, g * q0:(g + 1) * q0] = fs[i]
    return GroupedDataset(
        X=np.array(xs), groups=groups, y=np.array(ys), design=design, design_groups=design_groups
    )
