"""Seeded synthetic-data generators for the simulation studies.

A scenario names a generating model (separated / union / hierarchical /
multi-group), group sizes, true hyperparameters, noise, and a seed. Draws are
exact: the latent vector comes from the Cholesky factor of the scenario
kernel's Gram matrix, so identical scenarios reproduce bitwise-identical
datasets.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._utils import require
from .exceptions import ConfigError, GenerationError, NotPositiveDefiniteError
from .gp import GroupedDataset, NoiseSpec, cholesky_with_jitter, group_intercept_design
from .groups import GroupSpace, discrete_metric
from .kernels import (
    HierarchicalGP,
    MultiGroupRBF,
    SeparatedGP,
    UnionGP,
)

__all__ = ["ScenarioSpec", "generate", "imbalanced_scenario", "draw_latent"]

GENERATORS = ("sgp", "ugp", "hgp", "mggp")

# Default sampling box for the inputs; roughly ten length scales at b = 1.
DEFAULT_X_LOW = 0.0
DEFAULT_X_HIGH = 10.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to draw one synthetic dataset."""

    generator: str
    group_sizes: tuple
    p: int = 1
    params: dict = field(default_factory=dict)
    distances: Optional[np.ndarray] = None
    labels: Optional[tuple] = None
    noise: float = 0.1
    noise_per_group: Optional[tuple] = None
    beta_true: Optional[tuple] = None
    x_low: float = DEFAULT_X_LOW
    x_high: float = DEFAULT_X_HIGH
    seed: int = 0

    def __post_init__(self):
        require(self.generator in GENERATORS, f"unknown generator {self.generator!r}")
        sizes = tuple(int(s) for s in self.group_sizes)
        require(len(sizes) >= 1 and all(s >= 1 for s in sizes), "group sizes must be positive")
        object.__setattr__(self, "group_sizes", sizes)
        require(self.x_high > self.x_low, "x box must have positive width")
        if self.beta_true is not None:
            beta = tuple(float(b) for b in self.beta_true)
            require(len(beta) == len(sizes), "beta_true needs one intercept per group")
            object.__setattr__(self, "beta_true", beta)

    @property
    def k(self):
        return len(self.group_sizes)

    def space(self):
        if self.distances is None:
            return discrete_metric(self.k, self.labels)
        labels = self.labels or tuple(f"g{i}" for i in range(self.k))
        return GroupSpace(labels=tuple(labels), distances=np.asarray(self.distances, dtype=float))

    def kernel(self):
        space = self.space()
        prm = dict(self.params)
        if self.generator == "sgp":
            return SeparatedGP(space, self.p, sigma2=prm.get("sigma2", 1.0), b=prm.get("b", 1.0))
        if self.generator == "ugp":
            return UnionGP(space, self.p, sigma2=prm.get("sigma2", 1.0), b=prm.get("b", 1.0))
        if self.generator == "hgp":
            shared = UnionGP(
                space, self.p,
                sigma2=prm.get("shared.sigma2", 0.5), b=prm.get("shared.b", 1.0),
            )
            within = UnionGP(
                space, self.p,
                sigma2=prm.get("within.sigma2", 0.5), b=prm.get("within.b", 1.0),
            )
            return HierarchicalGP(space, self.p, shared=shared, within=within)
        return MultiGroupRBF(
            space, self.p,
            sigma2=prm.get("sigma2", 1.0), a=prm.get("a", 1.0), b=prm.get("b", 1.0),
        )

    def noise_spec(self):
        if self.noise_per_group is not None:
            return NoiseSpec.per_group(self.noise_per_group)
        return NoiseSpec.shared(self.noise)

    def to_dict(self):
        out = {
            "generator": self.generator,
            "group_sizes": list(self.group_sizes),
            "p": self.p,
            "params": {k: float(v) for k, v in self.params.items()},
            "noise": float(self.noise),
            "x_low": float(self.x_low),
            "x_high": float(self.x_high),
            "seed": int(self.seed),
        }
        if self.distances is not None:
            out["distances"] = [[float(v) for v in row] for row in np.asarray(self.distances)]
        if self.labels is not None:
            out["labels"] = list(self.labels)
        if self.noise_per_group is not None:
            out["noise_per_group"] = [float(v) for v in self.noise_per_group]
        if self.beta_true is not None:
            out["beta_true"] = list(self.beta_true)
        return out

    @classmethod
    def from_dict(cls, doc):
        try:
            kwargs = {
                "generator": doc["generator"],
                "group_sizes": tuple(doc["group_sizes"]),
                "p": int(doc.get("p", 1)),
                "params": dict(doc.get("params", {})),
                "noise": float(doc.get("noise", 0.1)),
                "x_low": float(doc.get("x_low", DEFAULT_X_LOW)),
                "x_high": float(doc.get("x_high", DEFAULT_X_HIGH)),
                "seed": int(doc.get("seed", 0)),
            }
            if "distances" in doc:
                kwargs["distances"] = np.asarray(doc["distances"], dtype=float)
            if "labels" in doc:
                kwargs["labels"] = tuple(doc["labels"])
            if "noise_per_group" in doc:
                kwargs["noise_per_group"] = tuple(doc["noise_per_group"])
            if "beta_true" in doc:
                kwargs["beta_true"] = tuple(doc["beta_true"])
            return cls(**kwargs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc


def draw_latent(kernel, X, groups, rng):
    """Exact zero-mean Gaussian draw with the kernel's Gram covariance."""
    try:
        L, _ = cholesky_with_jitter(kernel.gram(X, groups))
    except NotPositiveDefiniteError as exc:
        raise GenerationError(f"scenario Gram would not factor: {exc}") from exc
    return L @ rng.standard_normal(len(groups))


def generate(scenario):
    """Draw one dataset from a scenario, reproducibly from its seed.

    Inputs are uniform over the box, the latent vector is an exact draw from
    the scenario kernel, and the response adds the optional group intercepts
    plus Gaussian noise. Draw order (inputs, latent, noise) is fixed.
    """
    rng = np.random.default_rng(scenario.seed)
    sizes = scenario.group_sizes
    n = sum(sizes)
    groups = np.repeat(np.arange(scenario.k), sizes)
    X = rng.uniform(scenario.x_low, scenario.x_high, size=(n, scenario.p))
    kernel = scenario.kernel()
    z = draw_latent(kernel, X, groups, rng)
    noise = scenario.noise_spec()
    eps = np.sqrt(noise.diag_for(groups)) * rng.standard_normal(n)
    y = z + eps
    design = None
    design_groups = None
    if scenario.beta_true is not None:
        design, design_groups = group_intercept_design(groups, scenario.k)
        y = y + design @ np.asarray(scenario.beta_true)
    return GroupedDataset(X=X, groups=groups, y=y, design=design, design_groups=design_groups)


def imbalanced_scenario(n1, seed=0, d_similar=0.1, d_far=10.0, a=1.0, **overrides):
    """Three-group scenario with one under-sampled group.

    Groups 1 and 2 sit close together (distance ``d_similar``) while group 3
    is far from both (``d_far``); groups 2 and 3 are fixed at 50 samples and
    group 1 varies. Generated from the multi-group squared-exponential model.
    """
    n1 = int(n1)
    require(n1 >= 2, "n1 must be >= 2")
    d = np.array(
        [
            [0.0, d_similar, d_far],
            [d_similar, 0.0, d_far],
            [d_far, d_far, 0.0],
        ]
    )
    kwargs = {
        "generator": "mggp",
        "group_sizes": (n1, 50, 50),
        "p": 1,
        "params": {"sigma2": 1.0, "a": float(a), "b": 1.0},
        "distances": d,
        "noise": 0.1,
        "seed": int(seed),
    }
    kwargs.update(overrides)
    return ScenarioSpec(**kwargs)
