"""Covariance families on R^p x {groups}.

Every kernel here is a positive-definite function of a pair of (point, group)
arguments. Families share a common scale parameter ``sigma2`` and, where they
couple the Euclidean and group components, a group-similarity scale ``a``
(``a -> 0`` merges groups, ``a -> infinity`` separates them), a feature scale
``b``, and for the Matern-type families a dependency scale ``c`` and a
smoothness ``nu``.

All kernels evaluate pointwise, assemble symmetric Gram matrices, and expose
analytic hyperparameter derivatives for the marginal-likelihood optimizer.
Instances are immutable; ``with_params`` returns a modified copy.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from ._utils import (
    as_group_indices,
    as_matrix,
    nonnegative_scalar,
    positive_scalar,
    require,
)
from .exceptions import InputValidationError, UnsupportedParameterError
from .groups import GroupSpace

__all__ = [
    "MultiGroupKernel",
    "MultiGroupRBF",
    "MultiGroupRBFAlt",
    "MultiGroupMatern",
    "MultiGroupExponential",
    "MultiGroupCauchy",
    "MultiGroupCauchyAlt",
    "MultiGroupGaussianCross",
    "MultiGroupExponentialCross",
    "SeparableHomogeneous",
    "SeparatedGP",
    "UnionGP",
    "HierarchicalGP",
    "CompositeKernel",
    "PhiSpec",
    "PsiSpec",
    "kernel_from_dict",
    "kernel_to_dict",
    "FAMILIES",
]

# Below this Euclidean separation two points count as coincident; the
# Matern-type families switch to their closed-form diagonal branch there.
COINCIDENT_TOL = 1e-12

# Smoothness envelope for which the modified Bessel routine is trusted.
MATERN_NU_MAX = 10.0


def _sqdist(X1, X2):
    return cdist(X1, X2, "sqeuclidean")


def _symmetrize(K):
    upper = np.triu(K, 1)
    return upper + upper.T + np.diag(np.diag(K))


class MultiGroupKernel:
    """Base class: evaluation, Gram assembly, gradients, serialization."""

    family = ""
    _live = ()

    def __init__(self, space, p):
        require(isinstance(space, GroupSpace), "space must be a GroupSpace")
        p = int(p)
        require(p >= 1, "input dimension p must be >= 1")
        self.space = space
        self.p = p

    # -- family hooks -------------------------------------------------------

    def _k(self, r2, d, same):
        """Covariance from squared spatial distance, group distance, same-group mask."""
        raise NotImplementedError

    def _k_grad(self, r2, d, same, name):
        """Entrywise partial derivative of ``_k`` with respect to ``name``."""
        raise NotImplementedError

    def get_params(self):
        """Numeric hyperparameters as a flat dict (constructor keywords)."""
        raise NotImplementedError

    def _extra_dict(self):
        return {}

    # -- shared surface ------------------------------------------------------

    def live_params(self):
        """Names of the optimizable (positive) hyperparameters."""
        return tuple(self._live)

    def with_params(self, **updates):
        params = self.get_params()
        for name, value in updates.items():
            if name not in params:
                raise UnsupportedParameterError(
                    f"{self.family} has no parameter {name!r}"
                )
            params[name] = value
        return type(self)(self.space, self.p, **params)

    def _prepare(self, X, groups):
        X = as_matrix(X, n_cols=self.p)
        g = as_group_indices(groups, self.space.k, length=X.shape[0])
        return X, g

    def __call__(self, x, gi, xp, gj):
        """Evaluate the kernel at one pair of (point, group) arguments."""
        x = np.asarray(x, dtype=float).reshape(-1)
        xp = np.asarray(xp, dtype=float).reshape(-1)
        require(len(x) == self.p and len(xp) == self.p, f"points must have dimension {self.p}")
        gi, gj = int(gi), int(gj)
        require(0 <= gi < self.space.k and 0 <= gj < self.space.k, "group index out of range")
        r2 = float(np.sum((x - xp) ** 2))
        d = float(self.space.distances[gi, gj])
        out = self._k(np.array([r2]), np.array([d]), np.array([gi == gj]))
        return float(out[0])

    def gram(self, X, groups):
        """Symmetric n x n covariance matrix over a labelled sample."""
        X, g = self._prepare(X, groups)
        r2 = _sqdist(X, X)
        np.fill_diagonal(r2, 0.0)
        d = self.space.distances[np.ix_(g, g)]
        same = g[:, None] == g[None, :]
        return _symmetrize(self._k(r2, d, same))

    def cross_gram(self, X1, groups1, X2, groups2):
        """Rectangular covariance matrix between two labelled samples."""
        X1, g1 = self._prepare(X1, groups1)
        X2, g2 = self._prepare(X2, groups2)
        r2 = _sqdist(X1, X2)
        d = self.space.distances[np.ix_(g1, g2)]
        same = g1[:, None] == g2[None, :]
        return self._k(r2, d, same)

    def gram_gradient(self, X, groups, name):
        """Entrywise derivative of ``gram`` with respect to one hyperparameter."""
        X, g = self._prepare(X, groups)
        r2 = _sqdist(X, X)
        np.fill_diagonal(r2, 0.0)
        d = self.space.distances[np.ix_(g, g)]
        same = g[:, None] == g[None, :]
        return _symmetrize(self._k_grad(r2, d, same, name))

    def point_variance(self, groups):
        """Kernel value at coincident (point, group) arguments, per query."""
        g = as_group_indices(groups, self.space.k)
        m = len(g)
        return self._k(np.zeros(m), np.zeros(m), np.ones(m, dtype=bool))

    def cross_covariance(self, x, xp):
        """k x k matrix M with M_ij = K((x, c_i), (xp, c_j)).

        This is the cross-covariance of the equivalent k-variate process at
        one pair of points; stacking it over a grid reproduces ``gram``.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        xp = np.asarray(xp, dtype=float).reshape(-1)
        k = self.space.k
        r2 = np.full((k, k), float(np.sum((x - xp) ** 2)))
        same = np.eye(k, dtype=bool)
        return self._k(r2, self.space.distances, same)

    def to_dict(self):
        return {
            "family": self.family,
            "p": self.p,
            "params": {k: float(v) for k, v in self.get_params().items()},
            "space": {
                "labels": list(self.space.labels),
                "distances": [[float(v) for v in row] for row in self.space.distances],
            },
            "extra": self._extra_dict(),
        }

    def __repr__(self):
        params = ", ".join(f"{k}={v:.4g}" for k, v in sorted(self.get_params().items()))
        return f"{type(self).__name__}(k={self.space.k}, p={self.p}, {params})"

    def _unknown(self, name):
        raise UnsupportedParameterError(f"{self.family} has no parameter {name!r}")


class MultiGroupRBF(MultiGroupKernel):
    """Squared-exponential multi-group kernel.

    ``K = sigma2 / (a^2 d^2 + 1)^(p/2) * exp(-b^2 ||x - x'||^2 / (a^2 d^2 + 1))``
    """

    family = "mg_rbf"
    _live = ("sigma2", "a", "b")

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")

    def get_params(self):
        return {"sigma2": self.sigma2, "a": self.a, "b": self.b}

    def _scale(self, d):
        return (self.a * d) ** 2 + 1.0

    def _dscale_da(self, d):
        return 2.0 * self.a * d ** 2

    def _k(self, r2, d, same):
        A = self._scale(d)
        return self.sigma2 * A ** (-0.5 * self.p) * np.exp(-self.b ** 2 * r2 / A)

    def _k_grad(self, r2, d, same, name):
        A = self._scale(d)
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "b":
            return K * (-2.0 * self.b * r2 / A)
        if name == "a":
            dK_dA = K * (-0.5 * self.p / A + self.b ** 2 * r2 / A ** 2)
            return dK_dA * self._dscale_da(d)
        self._unknown(name)


class MultiGroupRBFAlt(MultiGroupRBF):
    """Squared-exponential variant whose group decay is linear in d.

    ``K = sigma2 / (a d + 1)^(p/2) * exp(-b^2 ||x - x'||^2 / (a d + 1))``
    """

    family = "mg_rbf_alt"

    def _scale(self, d):
        return self.a * d + 1.0

    def _dscale_da(self, d):
        return np.asarray(d, dtype=float)


class _MaternBase(MultiGroupKernel):
    """Shared scale algebra for the Matern-type families.

    Both use ``A = a^2 d^2 + 1`` and ``B = a^2 d^2 + c``; the spatial argument
    is ``z = b sqrt(A / B) ||x - x'||``. The family becomes separable at c = 1.
    """

    def _ab(self, d):
        u = (self.a * d) ** 2
        return u + 1.0, u + self.c

    def _diag_value(self, A, B):
        return self.sigma2 * self.c ** (0.5 * self.p) / (A ** self.nu * B ** (0.5 * self.p))


class MultiGroupMatern(_MaternBase):
    """Matern multi-group kernel with fixed smoothness ``nu``.

    Off the diagonal in x the value is
    ``P * (z/2)^nu * K_nu(z) * 2 / Gamma(nu)`` with
    ``P = sigma2 c^(p/2) / (A^nu B^(p/2))``; at coincident points it is ``P``.
    ``nu`` is a structural constant of the family (it selects the sample-path
    smoothness) and is not exposed to the optimizer.
    """

    family = "mg_matern"
    _live = ("sigma2", "a", "b", "c")

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0, c=1.0, nu=1.5):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")
        self.c = positive_scalar(c, "c")
        nu = positive_scalar(nu, "nu")
        if nu > MATERN_NU_MAX:
            raise UnsupportedParameterError(
                f"nu={nu} outside the supported envelope (0, {MATERN_NU_MAX}]"
            )
        self.nu = nu

    def get_params(self):
        return {
            "sigma2": self.sigma2,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "nu": self.nu,
        }

    def _pieces(self, r2, d):
        A, B = self._ab(d)
        r = np.sqrt(r2)
        near = r < COINCIDENT_TOL
        z = self.b * np.sqrt(A / B) * r
        z_safe = np.where(near, 1.0, z)
        prefac = (
            self.sigma2
            * 2.0
            * self.c ** (0.5 * self.p)
            / (gamma_fn(self.nu) * A ** self.nu * B ** (0.5 * self.p))
        )
        return A, B, r, near, z, z_safe, prefac

    def _k(self, r2, d, same):
        A, B, _r, near, _z, z_safe, prefac = self._pieces(r2, d)
        bess = (0.5 * z_safe) ** self.nu * kv(self.nu, z_safe)
        return np.where(near, self._diag_value(A, B), prefac * bess)

    def _k_grad(self, r2, d, same, name):
        A, B, r, near, _z, z_safe, prefac = self._pieces(r2, d)
        nu, p = self.nu, self.p
        g_val = (0.5 * z_safe) ** nu * kv(nu, z_safe)
        # d/dz [ (z/2)^nu K_nu(z) ] = -(z/2)^nu K_{nu-1}(z)
        g_der = -((0.5 * z_safe) ** nu) * kv(nu - 1.0, z_safe)
        diag = self._diag_value(A, B)

        if name == "sigma2":
            return np.where(near, diag, prefac * g_val) / self.sigma2
        if name == "b":
            off = prefac * g_der * (z_safe / self.b)
            return np.where(near, 0.0, off)
        if name == "a":
            du_da = 2.0 * self.a * d ** 2
            dlogP_du = -nu / A - 0.5 * p / B
            dz_du = z_safe * 0.5 * (1.0 / A - 1.0 / B)
            off = prefac * (dlogP_du * g_val + g_der * dz_du) * du_da
            return np.where(near, diag * dlogP_du * du_da, off)
        if name == "c":
            dlogP_dc = 0.5 * p / self.c - 0.5 * p / B
            dz_dc = -z_safe * 0.5 / B
            off = prefac * (dlogP_dc * g_val + g_der * dz_dc)
            return np.where(near, diag * dlogP_dc, off)
        self._unknown(name)


class MultiGroupExponential(_MaternBase):
    """Exponential multi-group kernel (the Matern family at nu = 1/2).

    ``K = sigma2 c^(p/2) / (A^(1/2) B^(p/2)) * exp(-b sqrt(A / B) ||x - x'||)``
    """

    family = "mg_exponential"
    _live = ("sigma2", "a", "b", "c")
    nu = 0.5

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0, c=1.0):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")
        self.c = positive_scalar(c, "c")

    def get_params(self):
        return {"sigma2": self.sigma2, "a": self.a, "b": self.b, "c": self.c}

    def _k(self, r2, d, same):
        A, B = self._ab(d)
        r = np.sqrt(r2)
        s = np.sqrt(A / B)
        return self._diag_value(A, B) * np.exp(-self.b * s * r)

    def _k_grad(self, r2, d, same, name):
        A, B = self._ab(d)
        r = np.sqrt(r2)
        s = np.sqrt(A / B)
        K = self._diag_value(A, B) * np.exp(-self.b * s * r)
        if name == "sigma2":
            return K / self.sigma2
        if name == "b":
            return K * (-s * r)
        if name == "a":
            du_da = 2.0 * self.a * d ** 2
            dlog_du = -0.5 / A - 0.5 * self.p / B - self.b * r * s * 0.5 * (1.0 / A - 1.0 / B)
            return K * dlog_du * du_da
        if name == "c":
            dlog_dc = 0.5 * self.p / self.c - 0.5 * self.p / B + self.b * r * s * 0.5 / B
            return K * dlog_dc
        self._unknown(name)


class MultiGroupCauchy(MultiGroupKernel):
    """Rational (Cauchy-type) multi-group kernel.

    ``K = sigma2 (a^2 d^2 + 1) / ((a^2 d^2 + 1)^2 + b^2 ||x - x'||^2)^((p+1)/2)``
    """

    family = "mg_cauchy"
    _live = ("sigma2", "a", "b")

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")

    def get_params(self):
        return {"sigma2": self.sigma2, "a": self.a, "b": self.b}

    def _scale(self, d):
        return (self.a * d) ** 2 + 1.0

    def _dscale_da(self, d):
        return 2.0 * self.a * d ** 2

    def _k(self, r2, d, same):
        A = self._scale(d)
        Q = A ** 2 + self.b ** 2 * r2
        return self.sigma2 * A * Q ** (-0.5 * (self.p + 1))

    def _k_grad(self, r2, d, same, name):
        A = self._scale(d)
        Q = A ** 2 + self.b ** 2 * r2
        if name == "sigma2":
            return A * Q ** (-0.5 * (self.p + 1))
        if name == "b":
            return -self.sigma2 * A * (self.p + 1) * self.b * r2 * Q ** (-0.5 * (self.p + 3))
        if name == "a":
            dK_dA = self.sigma2 * Q ** (-0.5 * (self.p + 3)) * (Q - (self.p + 1) * A ** 2)
            return dK_dA * self._dscale_da(d)
        self._unknown(name)


class MultiGroupCauchyAlt(MultiGroupCauchy):
    """Rational multi-group kernel with group decay linear in d.

    ``K = sigma2 (a d + 1) / ((a d + 1)^2 + b^2 ||x - x'||^2)^((p+1)/2)``
    """

    family = "mg_cauchy_alt"

    def _scale(self, d):
        return self.a * d + 1.0

    def _dscale_da(self, d):
        return np.asarray(d, dtype=float)


class MultiGroupGaussianCross(MultiGroupKernel):
    """Gaussian kernel with a multiplicative group/space interaction term.

    ``K = sigma2 exp(-a^2 d^2 - b^2 ||x - x'||^2 - c d^2 ||x - x'||^2)``
    """

    family = "mg_gaussian_cross"
    _live = ("sigma2", "a", "b", "c")

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0, c=0.05):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")
        self.c = positive_scalar(c, "c")

    def get_params(self):
        return {"sigma2": self.sigma2, "a": self.a, "b": self.b, "c": self.c}

    def _k(self, r2, d, same):
        expo = (self.a * d) ** 2 + self.b ** 2 * r2 + self.c * d ** 2 * r2
        return self.sigma2 * np.exp(-expo)

    def _k_grad(self, r2, d, same, name):
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "a":
            return K * (-2.0 * self.a * d ** 2)
        if name == "b":
            return K * (-2.0 * self.b * r2)
        if name == "c":
            return K * (-(d ** 2) * r2)
        self._unknown(name)


class MultiGroupExponentialCross(MultiGroupKernel):
    """Exponential-in-d kernel with a multiplicative interaction term.

    ``K = sigma2 exp(-a d - b^2 ||x - x'||^2 - c d ||x - x'||^2)``
    """

    family = "mg_exponential_cross"
    _live = ("sigma2", "a", "b", "c")

    def __init__(self, space, p, sigma2=1.0, a=1.0, b=1.0, c=0.05):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.a = nonnegative_scalar(a, "a")
        self.b = positive_scalar(b, "b")
        self.c = positive_scalar(c, "c")

    def get_params(self):
        return {"sigma2": self.sigma2, "a": self.a, "b": self.b, "c": self.c}

    def _k(self, r2, d, same):
        expo = self.a * d + self.b ** 2 * r2 + self.c * d * r2
        return self.sigma2 * np.exp(-expo)

    def _k_grad(self, r2, d, same, name):
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "a":
            return K * (-d)
        if name == "b":
            return K * (-2.0 * self.b * r2)
        if name == "c":
            return K * (-d * r2)
        self._unknown(name)


class SeparableHomogeneous(MultiGroupKernel):
    """Product of a squared-exponential in x and a two-value group factor.

    The group factor is 1 within a group and ``b_cat`` across groups; it is a
    valid correlation matrix iff ``-1/(k-1) <= b_cat <= 1``, which is enforced
    at construction.
    """

    family = "separable_homogeneous"
    _live = ("sigma2", "b")

    def __init__(self, space, p, sigma2=1.0, b=1.0, b_cat=0.5):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.b = positive_scalar(b, "b")
        b_cat = float(b_cat)
        if space.k >= 2:
            lo = -1.0 / (space.k - 1)
            if not (lo <= b_cat <= 1.0):
                raise InputValidationError(
                    f"b_cat={b_cat} outside the positive-definite range "
                    f"[{lo}, 1] for k={space.k}"
                )
        self.b_cat = b_cat

    def get_params(self):
        return {"sigma2": self.sigma2, "b": self.b}

    def _extra_dict(self):
        return {"b_cat": self.b_cat}

    def with_params(self, **updates):
        b_cat = updates.pop("b_cat", self.b_cat)
        params = self.get_params()
        for name, value in updates.items():
            if name not in params:
                self._unknown(name)
            params[name] = value
        return type(self)(self.space, self.p, b_cat=b_cat, **params)

    def _k(self, r2, d, same):
        spatial = self.sigma2 * np.exp(-self.b ** 2 * r2)
        return spatial * np.where(same, 1.0, self.b_cat)

    def _k_grad(self, r2, d, same, name):
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "b":
            return K * (-2.0 * self.b * r2)
        self._unknown(name)


class UnionGP(MultiGroupKernel):
    """Group-blind squared-exponential: one process shared by every group."""

    family = "ugp"
    _live = ("sigma2", "b")

    def __init__(self, space, p, sigma2=1.0, b=1.0):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.b = positive_scalar(b, "b")

    def get_params(self):
        return {"sigma2": self.sigma2, "b": self.b}

    def _k(self, r2, d, same):
        return self.sigma2 * np.exp(-self.b ** 2 * r2) * np.ones_like(np.asarray(d, dtype=float))

    def _k_grad(self, r2, d, same, name):
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "b":
            return K * (-2.0 * self.b * r2)
        self._unknown(name)


class SeparatedGP(MultiGroupKernel):
    """Independent squared-exponential per group: zero cross-group covariance."""

    family = "sgp"
    _live = ("sigma2", "b")

    def __init__(self, space, p, sigma2=1.0, b=1.0):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        self.b = positive_scalar(b, "b")

    def get_params(self):
        return {"sigma2": self.sigma2, "b": self.b}

    def _k(self, r2, d, same):
        within = self.sigma2 * np.exp(-self.b ** 2 * r2)
        return np.where(same, within, 0.0)

    def _k_grad(self, r2, d, same, name):
        K = self._k(r2, d, same)
        if name == "sigma2":
            return K / self.sigma2
        if name == "b":
            return K * (-2.0 * self.b * r2)
        self._unknown(name)


class HierarchicalGP(MultiGroupKernel):
    """Shared process plus a same-group bonus process.

    ``K = K_shared(x, x') + 1{same group} K_within(x, x')`` where both
    component kernels are group-blind. Component parameters are addressed with
    the prefixes ``shared.`` and ``within.``.
    """

    family = "hgp"

    def __init__(self, space, p, shared=None, within=None):
        super().__init__(space, p)
        if shared is None:
            shared = UnionGP(space, p, sigma2=0.5, b=1.0)
        if within is None:
            within = UnionGP(space, p, sigma2=0.5, b=1.0)
        for part, label in ((shared, "shared"), (within, "within")):
            require(isinstance(part, MultiGroupKernel), f"{label} must be a kernel")
            require(part.p == p, f"{label} kernel has p={part.p}, expected {p}")
        self.shared = shared
        self.within = within

    def live_params(self):
        return tuple(f"shared.{n}" for n in self.shared.live_params()) + tuple(
            f"within.{n}" for n in self.within.live_params()
        )

    def get_params(self):
        out = {f"shared.{k}": v for k, v in self.shared.get_params().items()}
        out.update({f"within.{k}": v for k, v in self.within.get_params().items()})
        return out

    def with_params(self, **updates):
        shared_updates, within_updates = {}, {}
        for name, value in updates.items():
            if name.startswith("shared."):
                shared_updates[name[len("shared."):]] = value
            elif name.startswith("within."):
                within_updates[name[len("within."):]] = value
            else:
                self._unknown(name)
        return HierarchicalGP(
            self.space,
            self.p,
            shared=self.shared.with_params(**shared_updates),
            within=self.within.with_params(**within_updates),
        )

    def _blind(self, kernel, r2):
        zeros = np.zeros_like(np.asarray(r2, dtype=float))
        return kernel._k(r2, zeros, np.ones_like(zeros, dtype=bool))

    def _k(self, r2, d, same):
        return self._blind(self.shared, r2) + np.where(same, self._blind(self.within, r2), 0.0)

    def _k_grad(self, r2, d, same, name):
        zeros = np.zeros_like(np.asarray(r2, dtype=float))
        ones = np.ones_like(zeros, dtype=bool)
        if name.startswith("shared."):
            return self.shared._k_grad(r2, zeros, ones, name[len("shared."):])
        if name.startswith("within."):
            grad = self.within._k_grad(r2, zeros, ones, name[len("within."):])
            return np.where(same, grad, 0.0)
        self._unknown(name)

    def _extra_dict(self):
        return {"shared": self.shared.to_dict(), "within": self.within.to_dict()}

    def to_dict(self):
        out = super().to_dict()
        out["params"] = {}
        return out


# ---------------------------------------------------------------------------
# Composite kernels built from a completely monotone radial profile phi and a
# positive group-scaling function psi with completely monotone derivative:
#   K = sigma2 * psi(d^2)^(-p/2) * phi(||x - x'||^2 / psi(d^2)).
# ---------------------------------------------------------------------------

_PHI_KINDS = ("powered_exponential", "matern", "generalized_cauchy", "sech_power")
_PSI_KINDS = ("power", "logarithmic", "rational")


@dataclass(frozen=True)
class PhiSpec:
    """Completely monotone radial profile with phi(0) = 1.

    kinds: ``powered_exponential`` exp(-c t^gamma); ``matern``
    (2^(nu-1) Gamma(nu))^-1 (c sqrt(t))^nu K_nu(c sqrt(t)); ``generalized_cauchy``
    (1 + c t^gamma)^-nu; ``sech_power`` 2^nu (e^(c sqrt(t)) + e^(-c sqrt(t)))^-nu.
    Requires c, nu > 0 and 0 < gamma <= 1.
    """

    kind: str
    c: float = 1.0
    gamma: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        require(self.kind in _PHI_KINDS, f"unknown phi kind {self.kind!r}")
        positive_scalar(self.c, "phi.c")
        positive_scalar(self.nu, "phi.nu")
        require(0.0 < self.gamma <= 1.0, f"phi.gamma must be in (0, 1], got {self.gamma}")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "powered_exponential":
            return np.exp(-self.c * t ** self.gamma)
        if self.kind == "generalized_cauchy":
            return (1.0 + self.c * t ** self.gamma) ** (-self.nu)
        z = self.c * np.sqrt(t)
        near = t < COINCIDENT_TOL ** 2
        z_safe = np.where(near, 1.0, z)
        if self.kind == "matern":
            val = (2.0 / gamma_fn(self.nu)) * (0.5 * z_safe) ** self.nu * kv(self.nu, z_safe)
            return np.where(near, 1.0, val)
        val = np.cosh(z_safe) ** (-self.nu)
        return np.where(near, 1.0, val)

    def d_dc(self, t):
        """Partial derivative with respect to the scale c."""
        t = np.asarray(t, dtype=float)
        if self.kind == "powered_exponential":
            return -(t ** self.gamma) * self.value(t)
        if self.kind == "generalized_cauchy":
            return -self.nu * t ** self.gamma * (1.0 + self.c * t ** self.gamma) ** (-self.nu - 1.0)
        z = self.c * np.sqrt(t)
        near = t < COINCIDENT_TOL ** 2
        z_safe = np.where(near, 1.0, z)
        root_t = np.sqrt(t)
        if self.kind == "matern":
            val = -(2.0 / gamma_fn(self.nu)) * (0.5 * z_safe) ** self.nu * kv(self.nu - 1.0, z_safe) * root_t
            return np.where(near, 0.0, val)
        val = -self.nu * np.cosh(z_safe) ** (-self.nu - 1.0) * np.sinh(z_safe) * root_t
        return np.where(near, 0.0, val)

    def t_dphi_dt(self, t):
        """t * phi'(t); finite at t = 0 even when phi'(0) diverges."""
        t = np.asarray(t, dtype=float)
        if self.kind == "powered_exponential":
            return -self.c * self.gamma * t ** self.gamma * self.value(t)
        if self.kind == "generalized_cauchy":
            return (
                -self.nu
                * self.c
                * self.gamma
                * t ** self.gamma
                * (1.0 + self.c * t ** self.gamma) ** (-self.nu - 1.0)
            )
        z = self.c * np.sqrt(t)
        near = t < COINCIDENT_TOL ** 2
        z_safe = np.where(near, 1.0, z)
        if self.kind == "matern":
            val = -(2.0 / gamma_fn(self.nu)) * (0.5 * z_safe) ** (self.nu + 1.0) * kv(self.nu - 1.0, z_safe)
            return np.where(near, 0.0, val)
        val = -0.5 * self.nu * z_safe * np.tanh(z_safe) * np.cosh(z_safe) ** (-self.nu)
        return np.where(near, 0.0, val)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "gamma": self.gamma, "nu": self.nu}


@dataclass(frozen=True)
class PsiSpec:
    """Positive group-scaling function with psi(0) = 1.

    kinds: ``power`` (a t^alpha + 1)^beta; ``logarithmic``
    log(a t^alpha + b) / log(b); ``rational`` (a t^alpha + beta) /
    (beta (a t^alpha + 1)). Requires a >= 0 (a = 0 collapses to a separable
    kernel), 0 < alpha <= 1, 0 < beta <= 1, b > 1.
    """

    kind: str
    a: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    b: float = 2.0

    def __post_init__(self):
        require(self.kind in _PSI_KINDS, f"unknown psi kind {self.kind!r}")
        nonnegative_scalar(self.a, "psi.a")
        require(0.0 < self.alpha <= 1.0, f"psi.alpha must be in (0, 1], got {self.alpha}")
        if self.kind in ("power", "rational"):
            require(0.0 < self.beta <= 1.0, f"psi.beta must be in (0, 1], got {self.beta}")
        if self.kind == "logarithmic":
            require(self.b > 1.0, f"psi.b must be > 1, got {self.b}")

    def value(self, u):
        u = np.asarray(u, dtype=float)
        w = self.a * u ** self.alpha
        if self.kind == "power":
            return (w + 1.0) ** self.beta
        if self.kind == "logarithmic":
            return np.log(w + self.b) / math.log(self.b)
        return (w + self.beta) / (self.beta * (w + 1.0))

    def d_da(self, u):
        u = np.asarray(u, dtype=float)
        ua = u ** self.alpha
        w = self.a * ua
        if self.kind == "power":
            return self.beta * ua * (w + 1.0) ** (self.beta - 1.0)
        if self.kind == "logarithmic":
            return ua / ((w + self.b) * math.log(self.b))
        return ua * (1.0 - self.beta) / (self.beta * (w + 1.0) ** 2)

    def to_dict(self):
        return {
            "kind": self.kind,
            "a": self.a,
            "alpha": self.alpha,
            "beta": self.beta,
            "b": self.b,
        }


class CompositeKernel(MultiGroupKernel):
    """Kernel composed from a radial profile and a group-scaling function.

    ``K = sigma2 psi(d^2)^(-p/2) phi(||x - x'||^2 / psi(d^2))`` is positive
    definite whenever ``phi`` is completely monotone and ``psi`` is positive
    with a completely monotone derivative; the catalog in :class:`PhiSpec` and
    :class:`PsiSpec` provides such pairs. Only the scale parameters
    (``sigma2``, ``phi.c``, ``psi.a``) are exposed to the optimizer; shape
    parameters are fixed at construction.
    """

    family = "composite"
    _live = ("sigma2", "phi.c", "psi.a")

    def __init__(self, space, p, sigma2=1.0, phi=None, psi=None):
        super().__init__(space, p)
        self.sigma2 = positive_scalar(sigma2, "sigma2")
        if phi is None:
            phi = PhiSpec("powered_exponential", c=1.0, gamma=1.0)
        if psi is None:
            psi = PsiSpec("power", a=1.0, alpha=1.0, beta=1.0)
        require(isinstance(phi, PhiSpec), "phi must be a PhiSpec")
        require(isinstance(psi, PsiSpec), "psi must be a PsiSpec")
        self.phi = phi
        self.psi = psi

    def get_params(self):
        return {"sigma2": self.sigma2, "phi.c": self.phi.c, "psi.a": self.psi.a}

    def with_params(self, **updates):
        sigma2 = updates.pop("sigma2", self.sigma2)
        phi, psi = self.phi, self.psi
        for name, value in updates.items():
            if name == "phi.c":
                phi = PhiSpec(phi.kind, c=float(value), gamma=phi.gamma, nu=phi.nu)
            elif name == "psi.a":
                psi = PsiSpec(psi.kind, a=float(value), alpha=psi.alpha, beta=psi.beta, b=psi.b)
            else:
                self._unknown(name)
        return CompositeKernel(self.space, self.p, sigma2=sigma2, phi=phi, psi=psi)

    def _k(self, r2, d, same):
        u = np.asarray(d, dtype=float) ** 2
        psi_u = self.psi.value(u)
        t = np.asarray(r2, dtype=float) / psi_u
        return self.sigma2 * psi_u ** (-0.5 * self.p) * self.phi.value(t)

    def _k_grad(self, r2, d, same, name):
        u = np.asarray(d, dtype=float) ** 2
        psi_u = self.psi.value(u)
        t = np.asarray(r2, dtype=float) / psi_u
        pref = self.sigma2 * psi_u ** (-0.5 * self.p)
        if name == "sigma2":
            return psi_u ** (-0.5 * self.p) * self.phi.value(t)
        if name == "phi.c":
            return pref * self.phi.d_dc(t)
        if name == "psi.a":
            inner = 0.5 * self.p * self.phi.value(t) + self.phi.t_dphi_dt(t)
            return -pref / psi_u * inner * self.psi.d_da(u)
        self._unknown(name)

    def _extra_dict(self):
        return {"phi": self.phi.to_dict(), "psi": self.psi.to_dict()}

    def to_dict(self):
        out = super().to_dict()
        out["params"] = {"sigma2": self.sigma2}
        return out


FAMILIES = {
    cls.family: cls
    for cls in (
        MultiGroupRBF,
        MultiGroupRBFAlt,
        MultiGroupMatern,
        MultiGroupExponential,
        MultiGroupCauchy,
        MultiGroupCauchyAlt,
        MultiGroupGaussianCross,
        MultiGroupExponentialCross,
        SeparableHomogeneous,
        SeparatedGP,
        UnionGP,
        HierarchicalGP,
        CompositeKernel,
    )
}


def kernel_to_dict(kernel):
    return kernel.to_dict()


def kernel_from_dict(doc):
    """Rebuild a kernel from its JSON document form."""
    require(isinstance(doc, dict), "kernel document must be an object")
    for field_name in ("family", "p", "space"):
        require(field_name in doc, f"kernel document missing {field_name!r}")
    family = doc["family"]
    require(family in FAMILIES, f"unknown kernel family {family!r}")
    space_doc = doc["space"]
    space = GroupSpace(
        labels=tuple(space_doc["labels"]),
        distances=np.asarray(space_doc["distances"], dtype=float),
    )
    p = int(doc["p"])
    params = dict(doc.get("params", {}))
    extra = dict(doc.get("extra", {}))
    cls = FAMILIES[family]
    if cls is HierarchicalGP:
        return HierarchicalGP(
            space,
            p,
            shared=kernel_from_dict(extra["shared"]),
            within=kernel_from_dict(extra["within"]),
        )
    if cls is CompositeKernel:
        return CompositeKernel(
            space,
            p,
            sigma2=params.get("sigma2", 1.0),
            phi=PhiSpec(**extra["phi"]),
            psi=PsiSpec(**extra["psi"]),
        )
    if cls is SeparableHomogeneous:
        return SeparableHomogeneous(space, p, b_cat=extra.get("b_cat", 0.5), **params)
    return cls(space, p, **params)
