"""Hyperparameter estimation: maximum likelihood and Bayesian sampling.

Maximum likelihood runs gradient ascent with a backtracking (Armijo) line
search over log-transformed parameters, restarted from several dispersed
initial points because the marginal likelihood is often multimodal in the
group-similarity scale. The Bayesian route pairs inverse-gamma priors on the
positive parameters (with the log-transform Jacobian) and a Gaussian prior on
the regression coefficients with an adaptive random-walk Metropolis sampler
whose proposal is frozen after warmup, so post-warmup chains are exact.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from ._utils import as_matrix, require
from .exceptions import FitFailedError, InputValidationError, MggpError
from .gp import (
    GroupedDataset,
    NoiseSpec,
    log_marginal_likelihood,
    log_marginal_likelihood_and_gradient,
    predict,
)
from .groups import discrete_metric
from .kernels import MultiGroupRBF

__all__ = [
    "FitResult",
    "RestartRecord",
    "PriorSpec",
    "McmcChain",
    "fit_mle",
    "log_posterior",
    "sample_mcmc",
    "adaptive_random_walk",
    "posterior_predictive_samples",
    "PredictiveSamples",
    "pairwise_distance_learning",
    "PairwiseAResult",
    "split_rhat",
    "MCMC_PARAM_ORDER",
]

# Steps in log-parameter space are clipped to this box; e^46 ~ 1e20 keeps the
# ascent from wandering into overflow territory on flat likelihood shelves.
LOG_PARAM_BOUND = 46.0

MCMC_PARAM_ORDER = ("a", "b", "sigma2", "tau2")


@dataclass(frozen=True)
class RestartRecord:
    index: int
    init: dict
    log_lik: float
    iterations: int
    converged: bool
    gradient_norm: float
    error: Optional[str] = None


@dataclass(frozen=True)
class FitResult:
    """Best-of-restarts maximum likelihood fit."""

    kernel: object
    noise: NoiseSpec
    beta: Optional[np.ndarray]
    log_lik: float
    iterations: int
    converged: bool
    gradient_norm: float
    free: tuple
    restarts: tuple

    def params(self):
        out = {name: float(self.kernel.get_params()[name]) for name in self.kernel.live_params()}
        for name in self.noise.free_names():
            out[name] = self.noise.get(name)
        return out

    def to_dict(self):
        return {
            "params": {k: float(v) for k, v in self.params().items()},
            "beta": None if self.beta is None else [float(b) for b in self.beta],
            "log_lik": float(self.log_lik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "gradient_norm": float(self.gradient_norm),
            "free": list(self.free),
            "restarts": [
                {
                    "index": r.index,
                    "init": {k: float(v) for k, v in r.init.items()},
                    "log_lik": float(r.log_lik),
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "gradient_norm": float(r.gradient_norm),
                    "error": r.error,
                }
                for r in self.restarts
            ],
        }


def _heuristic_scales(data, names):
    """Data-driven positive scales used to seed the restarts."""
    y_var = float(np.var(data.y)) if data.n > 1 else 1.0
    y_var = y_var if y_var > 0 else 1.0
    if data.n > 1:
        dists = pdist(data.X)
        med = float(np.median(dists[dists > 0])) if np.any(dists > 0) else 1.0
    else:
        med = 1.0
    scales = {}
    for name in names:
        base = name.split(".")[-1]
        if base.startswith("tau2"):
            scales[name] = 0.1 * y_var
        elif base == "sigma2":
            scales[name] = y_var
        elif base == "b":
            scales[name] = 1.0 / med
        elif base == "c" and name.startswith("phi."):
            scales[name] = 1.0 / med ** 2
        else:
            scales[name] = 1.0
    return scales


def _apply_point(kernel, noise, free, log_point):
    noise_names = set(noise.free_names())
    kernel_updates = {}
    for name, lv in zip(free, log_point):
        value = math.exp(lv)
        if name in noise_names:
            noise = noise.with_value(name, value)
        else:
            kernel_updates[name] = value
    if kernel_updates:
        kernel = kernel.with_params(**kernel_updates)
    return kernel, noise


def _ascend(value_fn, value_grad_fn, x0, max_iter, grad_tol, step0=0.5):
    """Gradient ascent with backtracking line search on the Armijo condition."""
    x = np.asarray(x0, dtype=float)
    f, g = value_grad_fn(x)
    step = step0
    iterations = 0
    converged = False
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
        if gnorm < grad_tol:
            converged = True
            break
        iterations += 1
        accepted = False
        while step > 1e-14:
            x_new = np.clip(x + step * g, -LOG_PARAM_BOUND, LOG_PARAM_BOUND)
            f_new = value_fn(x_new)
            if np.isfinite(f_new) and f_new >= f + 1e-4 * float(g @ (x_new - x)):
                x = x_new
                f, g = value_grad_fn(x)
                step = min(step * 2.0, 1e6)
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
    return x, f, gnorm, iterations, converged or gnorm < grad_tol


def fit_mle(
    kernel,
    data,
    noise,
    free=None,
    restarts=5,
    max_iter=150,
    grad_tol=1e-6,
    seed=0,
    beta="profiled",
):
    """Maximize the collapsed marginal likelihood over log parameters.

    ``kernel`` and ``noise`` act as templates: parameters named in ``free``
    (default: every live kernel parameter plus the noise variances) are
    optimized, the rest stay fixed. Each restart draws its initial log
    parameters uniformly from [-3, 1] around the log of data-scale heuristics.
    Returns the best restart; raises :class:`FitFailedError` if every restart
    fails to produce a finite likelihood.
    """
    require(data.n >= 1, "dataset is empty")
    if free is None:
        free = tuple(kernel.live_params()) + noise.free_names()
    free = tuple(free)
    known = set(kernel.live_params()) | set(noise.free_names())
    for name in free:
        require(name in known, f"unknown free parameter {name!r}")
    beta_mode = beta if data.design is not None else None

    def value_fn(log_point):
        kern, nz = _apply_point(kernel, noise, free, log_point)
        try:
            return log_marginal_likelihood(kern, data, nz, beta=beta_mode).value
        except MggpError:
            return -np.inf

    def value_grad_fn(log_point):
        kern, nz = _apply_point(kernel, noise, free, log_point)
        value, grads, _ = log_marginal_likelihood_and_gradient(
            kern, data, nz, free, beta=beta_mode
        )
        return value, np.array([grads[name] for name in free])

    scales = _heuristic_scales(data, free)
    log_base = np.array([math.log(scales[name]) for name in free])

    records = []
    best = None
    for r in range(max(1, int(restarts))):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        x0 = log_base + rng.uniform(-3.0, 1.0, size=len(free))
        init = {name: math.exp(v) for name, v in zip(free, x0)}
        try:
            f0 = value_fn(x0)
            if not np.isfinite(f0):
                raise FitFailedError("initial point has non-finite likelihood")
            x, f, gnorm, iters, conv = _ascend(value_fn, value_grad_fn, x0, max_iter, grad_tol)
            records.append(
                RestartRecord(
                    index=r, init=init, log_lik=f, iterations=iters,
                    converged=conv, gradient_norm=gnorm,
                )
            )
            if best is None or f > best[1]:
                best = (x, f, gnorm, iters, conv)
        except MggpError as exc:
            records.append(
                RestartRecord(
                    index=r, init=init, log_lik=-np.inf, iterations=0,
                    converged=False, gradient_norm=np.inf, error=str(exc),
                )
            )
    if best is None:
        raise FitFailedError(
            "all restarts failed: " + "; ".join(r.error or "?" for r in records)
        )
    x, f, gnorm, iters, conv = best
    kern, nz = _apply_point(kernel, noise, free, x)
    beta_hat = log_marginal_likelihood(kern, data, nz, beta=beta_mode).beta
    return FitResult(
        kernel=kern,
        noise=nz,
        beta=beta_hat,
        log_lik=f,
        iterations=iters,
        converged=conv,
        gradient_norm=gnorm,
        free=free,
        restarts=tuple(records),
    )


# ---------------------------------------------------------------------------
# Bayesian model: priors, posterior, adaptive random-walk Metropolis.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorSpec:
    """Inverse-gamma (shape, rate) priors on a, b, sigma2, tau2; Gaussian on beta."""

    a: tuple = (1.0, 1.0)
    b: tuple = (1.0, 1.0)
    sigma2: tuple = (1.0, 1.0)
    tau2: tuple = (1.0, 1.0)
    beta_mean: Optional[np.ndarray] = None
    beta_precision: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("a", "b", "sigma2", "tau2"):
            shape, rate = getattr(self, name)
            require(shape > 0 and rate > 0, f"prior for {name} needs positive shape/rate")

    def beta_moments(self, q):
        mean = np.zeros(q) if self.beta_mean is None else np.asarray(self.beta_mean, dtype=float)
        prec = np.eye(q) if self.beta_precision is None else np.asarray(self.beta_precision, dtype=float)
        require(mean.shape == (q,), f"beta_mean must have length {q}")
        require(prec.shape == (q, q), "beta_precision must be q x q")
        return mean, prec


def _invgamma_logpdf(x, shape, rate):
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - rate / x


@dataclass(frozen=True)
class McmcChain:
    """Post-warmup samples over (log a, log b, log sigma2, log tau2, beta)."""

    names: tuple
    samples: np.ndarray
    log_posterior: np.ndarray
    acceptance_rate: float
    seed: int

    def to_dict(self):
        return {
            "names": list(self.names),
            "samples": [[float(v) for v in row] for row in self.samples],
            "log_posterior": [float(v) for v in self.log_posterior],
            "acceptance_rate": float(self.acceptance_rate),
            "seed": int(self.seed),
        }


def _mcmc_names(q):
    names = tuple(f"log_{p}" for p in MCMC_PARAM_ORDER)
    return names + tuple(f"beta_{j}" for j in range(q))


def log_posterior(kernel_template, data, priors, point):
    """Log prior plus collapsed log likelihood at one parameter point.

    ``point`` is a flat vector ``(log a, log b, log sigma2, log tau2,
    beta...)``. Inverse-gamma priors act on the raw positive parameters and
    the log-transform Jacobian (one ``+u`` per log parameter) is included.
    Factorization failures return ``-inf`` so the sampler rejects the point.
    """
    q = data.q
    point = np.asarray(point, dtype=float).reshape(-1)
    require(len(point) == 4 + q, f"point must have length {4 + q}")
    log_a, log_b, log_s2, log_t2 = point[:4]
    beta = point[4:]
    lp = 0.0
    for u, prior in zip(point[:4], (priors.a, priors.b, priors.sigma2, priors.tau2)):
        lp += _invgamma_logpdf(math.exp(u), *prior) + u
    if q:
        mean, prec = priors.beta_moments(q)
        diff = beta - mean
        sign, logdet = np.linalg.slogdet(prec)
        require(sign > 0, "beta_precision must be positive definite")
        lp += 0.5 * logdet - 0.5 * q * math.log(2.0 * math.pi) - 0.5 * float(diff @ prec @ diff)
    if not np.isfinite(lp):
        return -np.inf
    kernel = kernel_template.with_params(
        a=math.exp(log_a), b=math.exp(log_b), sigma2=math.exp(log_s2)
    )
    noise = NoiseSpec.shared(math.exp(log_t2))
    try:
        ll = log_marginal_likelihood(
            kernel, data, noise, beta=beta if q else None
        ).value
    except MggpError:
        return -np.inf
    return lp + ll


def adaptive_random_walk(
    target,
    x0,
    warmup,
    draws,
    rng,
    target_accept=0.3,
    adapt_window=50,
):
    """Adaptive random-walk Metropolis chain on an arbitrary log density.

    During warmup the diagonal proposal is rebuilt from the running sample
    variance scaled by 2.38^2 / D, and a global scale is nudged toward the
    target acceptance rate. Both are frozen after warmup, so the returned
    (post-warmup) samples come from an exact Metropolis chain.
    """
    x = np.asarray(x0, dtype=float).copy()
    dim = len(x)
    lp = target(x)
    require(np.isfinite(lp), "initial point has non-finite log density")
    sd = np.full(dim, 0.1)
    log_scale = 0.0
    history = np.empty((warmup, dim))
    accepts_window = 0
    base = (2.38 ** 2) / max(dim, 1)

    for t in range(warmup):
        prop = x + np.exp(log_scale) * sd * rng.standard_normal(dim)
        lp_prop = target(prop)
        if math.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            accepts_window += 1
        history[t] = x
        if (t + 1) % adapt_window == 0:
            rate = accepts_window / adapt_window
            log_scale += 0.66 * (rate - target_accept)
            accepts_window = 0
            # coordinate scales from the settled half of the warmup so far
            lo = (t + 1) // 2
            if t + 1 - lo >= adapt_window:
                var = np.var(history[lo: t + 1], axis=0)
                sd = np.sqrt(np.maximum(base * var, 1e-8))

    samples = np.empty((draws, dim))
    logps = np.empty(draws)
    accepted = 0
    for s in range(draws):
        prop = x + np.exp(log_scale) * sd * rng.standard_normal(dim)
        lp_prop = target(prop)
        if math.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            accepted += 1
        samples[s] = x
        logps[s] = lp
    return samples, logps, accepted / max(draws, 1)


def sample_mcmc(
    kernel_template,
    data,
    priors=None,
    chains=4,
    warmup=1000,
    draws=1000,
    target_accept=0.3,
    seed=0,
):
    """Posterior chains for the collapsed multi-group GP model.

    Runs ``chains`` adaptive random-walk Metropolis chains with per-chain
    seeds derived from the master seed and dispersed initial values. Returns
    one :class:`McmcChain` per chain holding only post-warmup draws.
    """
    require(warmup >= 1 and draws >= 1, "warmup and draws must be >= 1")
    if priors is None:
        priors = PriorSpec()
    q = data.q
    names = _mcmc_names(q)

    def target(point):
        return log_posterior(kernel_template, data, priors, point)

    scales = _heuristic_scales(data, ("a", "b", "sigma2", "tau2"))
    center = np.concatenate(
        [
            np.log([scales["a"], scales["b"], scales["sigma2"], scales["tau2"]]),
            np.zeros(q),
        ]
    )
    out = []
    for c in range(int(chains)):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), c]))
        x0 = center + rng.uniform(-1.0, 1.0, size=len(center))
        samples, logps, rate = adaptive_random_walk(
            target, x0, warmup, draws, rng, target_accept=target_accept
        )
        out.append(
            McmcChain(
                names=names,
                samples=samples,
                log_posterior=logps,
                acceptance_rate=rate,
                seed=int(seed),
            )
        )
    return out


def split_rhat(chain_samples):
    """Split-chain potential scale reduction factor per parameter.

    Each chain is split in half; returns ``sqrt(((m - 1) / m + B / (m W)))``
    over the resulting half-chains, the classic convergence diagnostic.
    """
    halves = []
    for samples in chain_samples:
        samples = np.asarray(samples, dtype=float)
        m = samples.shape[0] // 2
        require(m >= 2, "need at least 4 draws per chain for split R-hat")
        halves.append(samples[:m])
        halves.append(samples[m: 2 * m])
    stacked = np.stack(halves)  # (2C, m, D)
    n_seq, m, _ = stacked.shape
    seq_means = stacked.mean(axis=1)
    seq_vars = stacked.var(axis=1, ddof=1)
    W = seq_vars.mean(axis=0)
    B = m * seq_means.var(axis=0, ddof=1)
    var_plus = (m - 1.0) / m * W + B / m
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    return np.where(W > 0, rhat, 1.0)


@dataclass(frozen=True)
class PredictiveSamples:
    """Per-query posterior predictive draws and their summary quantiles."""

    samples: np.ndarray  # (num draws, num queries)
    quantiles: dict = field(default_factory=dict)


def posterior_predictive_samples(
    chains,
    kernel_template,
    data,
    queries,
    query_groups,
    thin=1,
    seed=0,
):
    """Response draws at the queries, one per retained posterior draw.

    For each retained draw the latent values at the queries are sampled from
    their Gaussian conditional given the data and that draw's parameters, then
    a response is drawn by adding the design mean and Gaussian noise with that
    draw's tau^2.
    """
    thin = max(1, int(thin))
    queries = as_matrix(queries, "queries", n_cols=kernel_template.p)
    qg = np.asarray(query_groups, dtype=int)
    q = data.q
    rng = np.random.default_rng(seed)
    rows = []
    for chain in chains:
        for s in range(0, chain.samples.shape[0], thin):
            point = chain.samples[s]
            kernel = kernel_template.with_params(
                a=math.exp(point[0]), b=math.exp(point[1]), sigma2=math.exp(point[2])
            )
            tau2 = math.exp(point[3])
            beta = point[4:] if q else None
            noise = NoiseSpec.shared(tau2)
            dist = predict(
                kernel,
                data,
                noise,
                queries,
                qg,
                beta=beta,
                query_design=_query_intercepts(data, qg) if q else None,
                mode="latent",
                want_covariance=True,
            )
            cov = 0.5 * (dist.covariance + dist.covariance.T)
            cov[np.diag_indices_from(cov)] += 1e-12
            L = np.linalg.cholesky(cov)
            latent = dist.mean + L @ rng.standard_normal(len(qg))
            response = latent + math.sqrt(tau2) * rng.standard_normal(len(qg))
            rows.append(response)
    samples = np.array(rows)
    quantiles = {
        "2.5%": np.percentile(samples, 2.5, axis=0),
        "50%": np.percentile(samples, 50.0, axis=0),
        "97.5%": np.percentile(samples, 97.5, axis=0),
    }
    return PredictiveSamples(samples=samples, quantiles=quantiles)


def _query_intercepts(data, query_groups):
    q = data.q
    Fq = np.zeros((len(query_groups), q))
    for col, g in enumerate(np.asarray(data.design_groups, dtype=int)):
        Fq[query_groups == g, col] = 1.0
    return Fq


@dataclass(frozen=True)
class PairwiseAResult:
    """Matrix of pairwise group-similarity estimates (NaN where skipped)."""

    labels: tuple
    a_hat: np.ndarray
    missing: tuple


def pairwise_distance_learning(
    data,
    space,
    kernel_factory=None,
    noise_mode="shared",
    free=("sigma2", "a", "b", "tau2"),
    restarts=3,
    max_iter=100,
    seed=0,
    min_per_group=2,
):
    """Fit a two-group model on every unordered group pair; collect a-hat.

    Each pair is restricted to its rows, relabelled onto a two-group
    equidistant space, and fit by maximum likelihood; the estimated
    group-similarity scale becomes a learned distance between the two groups.
    Pairs where either group has fewer than ``min_per_group`` rows are left
    missing. The diagonal is zero and the matrix symmetric by construction.
    """
    if kernel_factory is None:
        kernel_factory = lambda pair_space, p: MultiGroupRBF(pair_space, p)
    k = space.k
    a_hat = np.zeros((k, k))
    missing = []
    for i in range(k):
        for j in range(i + 1, k):
            mask_i = data.groups == i
            mask_j = data.groups == j
            if mask_i.sum() < min_per_group or mask_j.sum() < min_per_group:
                a_hat[i, j] = a_hat[j, i] = np.nan
                missing.append((i, j))
                continue
            mask = mask_i | mask_j
            sub = GroupedDataset(
                X=data.X[mask],
                groups=(data.groups[mask] == j).astype(int),
                y=data.y[mask],
            )
            pair_space = discrete_metric(2, (space.labels[i], space.labels[j]))
            kernel = kernel_factory(pair_space, data.p)
            if noise_mode == "shared":
                noise = NoiseSpec.shared(0.1)
                pair_free = tuple(f for f in free if not f.startswith("tau2")) + ("tau2",)
            else:
                noise = NoiseSpec.per_group([0.1, 0.1])
                pair_free = tuple(f for f in free if not f.startswith("tau2")) + ("tau2_0", "tau2_1")
            fit = fit_mle(
                kernel,
                sub,
                noise,
                free=pair_free,
                restarts=restarts,
                max_iter=max_iter,
                seed=int(seed) + 7919 * (i * k + j),
            )
            a_hat[i, j] = a_hat[j, i] = float(fit.kernel.get_params()["a"])
    return PairwiseAResult(labels=space.labels, a_hat=a_hat, missing=tuple(missing))
