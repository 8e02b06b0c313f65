"""Finite group sets: distance matrices, embedding existence, simplex coordinates.

A :class:`GroupSpace` couples ``k`` named groups with a symmetric, zero-diagonal
matrix of pairwise distances. Kernels consume the distances directly; the
helpers here answer whether the distances are realizable as Euclidean
distances (via the centered Gram matrix of squared distances) and, for the
equidistant default metric, produce explicit simplex coordinates.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._utils import require
from .exceptions import InputValidationError, UnsupportedMetricError

__all__ = [
    "GroupSpace",
    "GramFacts",
    "discrete_metric",
    "gram_facts",
    "simplex_embedding",
]

# Certificate tolerance for "is this Gram matrix PSD" scales with k.
PSD_TOL_PER_GROUP = 1e-10


@dataclass(frozen=True)
class GroupSpace:
    """``k`` distinct group labels plus their pairwise distances.

    The distance matrix must be symmetric with an exactly zero diagonal and
    nonnegative entries. The triangle inequality is *not* required (kernels
    only read the d_ij values); a violation is surfaced through
    ``satisfies_triangle`` and a warning at construction.
    """

    labels: tuple
    distances: np.ndarray
    satisfies_triangle: bool = field(init=False, default=True)

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        require(len(labels) >= 1, "need at least one group")
        require(len(set(labels)) == len(labels), "group labels must be unique")
        d = np.array(self.distances, dtype=float)
        k = len(labels)
        require(d.shape == (k, k), f"distances must be {k}x{k}, got {d.shape}")
        require(np.all(np.isfinite(d)), "distances contain non-finite values")
        scale = max(1.0, float(np.max(np.abs(d))))
        require(
            float(np.max(np.abs(d - d.T))) <= 1e-12 * scale,
            "distance matrix must be symmetric",
        )
        d = 0.5 * (d + d.T)
        require(np.all(np.diag(d) == 0.0), "distance diagonal must be exactly zero")
        require(np.all(d >= 0.0), "distances must be nonnegative")
        d.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "satisfies_triangle", _triangle_ok(d))
        if not self.satisfies_triangle:
            warnings.warn(
                "distance matrix violates the triangle inequality; kernels will "
                "still consume it, but it is not a metric",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def k(self):
        return len(self.labels)

    @property
    def is_discrete(self):
        """True when d_ij = 1 for every i != j (the equidistant default)."""
        k = self.k
        off = self.distances[~np.eye(k, dtype=bool)]
        return bool(np.all(off == 1.0))

    def index_of(self, label):
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InputValidationError(f"unknown group label {label!r}") from None

    def to_csv(self, path):
        """Write header row of labels then the k x k distance rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.labels)
            for row in self.distances:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        require(len(rows) >= 2, "distance CSV needs a header row plus k data rows")
        labels = [cell.strip() for cell in rows[0]]
        k = len(labels)
        require(len(rows) == k + 1, f"expected {k} distance rows, got {len(rows) - 1}")
        try:
            d = np.array([[float(cell) for cell in row] for row in rows[1:]])
        except ValueError as exc:
            raise InputValidationError(f"non-numeric distance entry: {exc}") from exc
        return cls(labels=tuple(labels), distances=d)


@dataclass(frozen=True)
class GramFacts:
    """Centered Gram matrix of a group metric with its rank and PSD verdict.

    ``gram[i, j] = (d(c_1, c_i)^2 + d(c_1, c_j)^2 - d(c_i, c_j)^2) / 2``. An
    isometric embedding into R^{p'} exists iff ``gram`` is PSD with rank at
    most p'.
    """

    gram: np.ndarray
    rank: int
    is_psd: bool


def _triangle_ok(d, tol=1e-12):
    k = d.shape[0]
    for mid in range(k):
        if np.any(d > d[:, [mid]] + d[[mid], :] + tol):
            return False
    return True


def discrete_metric(k, labels=None):
    """Equidistant GroupSpace: d_ij = 1 - delta_ij.

    When ``labels`` is omitted, groups are named ``g0 .. g{k-1}``.
    """
    k = int(k)
    require(k >= 1, "k must be >= 1")
    if labels is None:
        labels = tuple(f"g{i}" for i in range(k))
    labels = tuple(str(lab) for lab in labels)
    require(len(labels) == k, f"expected {k} labels, got {len(labels)}")
    d = np.ones((k, k)) - np.eye(k)
    return GroupSpace(labels=labels, distances=d)


def gram_facts(space):
    """Embedding-existence facts for a group space.

    Returns the centered Gram matrix of squared distances anchored at the
    first group, its numerical rank (singular values above
    ``k * eps * sigma_max``), and whether its minimum eigenvalue clears
    ``-1e-10 * k``.
    """
    sq = space.distances ** 2
    g = 0.5 * (sq[0][:, None] + sq[0][None, :] - sq)
    g = 0.5 * (g + g.T)
    sv = np.linalg.svd(g, compute_uv=False)
    smax = sv[0] if len(sv) else 0.0
    tol = space.k * np.finfo(float).eps * smax
    rank = int(np.sum(sv > tol))
    min_eig = float(np.linalg.eigvalsh(g)[0])
    is_psd = min_eig >= -PSD_TOL_PER_GROUP * space.k
    return GramFacts(gram=g, rank=rank, is_psd=is_psd)


def simplex_embedding(space):
    """Map k equidistant groups to the vertices of a unit-edge simplex.

    Only defined for the discrete metric; the returned ``(k, k-1)`` array has
    ``||v_i - v_j|| = 1`` for every pair i != j. The first ``k - 1`` vertices
    are scaled, centered basis vectors and the last lies on the diagonal.
    """
    if not space.is_discrete:
        raise UnsupportedMetricError(
            "simplex embedding is only available for the discrete metric"
        )
    k = space.k
    require(k >= 2, "simplex embedding needs k >= 2")
    verts = np.zeros((k, k - 1))
    shift = (1.0 + 1.0 / math.sqrt(k)) / ((k - 1) * math.sqrt(2.0))
    for i in range(k - 1):
        verts[i, i] = 1.0 / math.sqrt(2.0)
    verts[: k - 1] -= shift
    verts[k - 1, :] = 1.0 / math.sqrt(2.0 * k)
    return verts
