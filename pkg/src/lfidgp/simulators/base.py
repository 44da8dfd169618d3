"""Simulator descriptions, priors and the weighted Euclidean discrepancy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError, ShapeError
from ..mathcore import Bounds, ParameterVector, RngStream


def euclidean_discrepancy(s_obs, s_theta, weights=None):
    """``sqrt(sum_i w_i (s_obs_i - s_i)^2)``, row-wise for 2-D ``s_theta``."""
    a = np.asarray(s_obs, float)
    b = np.asarray(s_theta, float)
    if a.shape[-1:] != b.shape[-1:]:
        raise ShapeError(f"summary lengths differ: {a.shape} vs {b.shape}")
    w = np.ones(a.shape[-1]) if weights is None else np.asarray(weights, float)
    if w.shape != a.shape[-1:]:
        raise ShapeError("one weight per summary is required")
    if np.any(w <= 0):
        raise DomainError("discrepancy weights must be positive")
    return np.sqrt(np.sum(w * (a - b) ** 2, axis=-1))


@dataclass(frozen=True)
class UniformPrior:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.upper > self.lower:
            raise DomainError("empty prior interval")

    def sample(self, g: np.random.Generator, n):
        return self.lower + (self.upper - self.lower) * g.random(n)

    def logpdf(self, x):
        x = np.asarray(x, float)
        inside = (x >= self.lower) & (x <= self.upper)
        return np.where(inside, -np.log(self.upper - self.lower), -np.inf)

    def to_dict(self):
        return {"kind": "uniform", "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class SimulatorSpec:
    """Everything the inference loop needs to know about one simulator.

    ``simulate(theta_array, rng)`` maps a 1-D parameter vector to a 1-D summary
    vector.  ``batch`` (optional) maps an ``(n, d)`` array to ``(n, k)``
    summaries in one call.
    """

    name: str
    bounds: Bounds
    prior: tuple
    theta_obs: ParameterVector
    s_obs: np.ndarray
    weights: np.ndarray
    simulate_fn: Callable
    batch_fn: Callable | None = None
    options: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.prior) != self.bounds.dim:
            raise ShapeError("one prior per parameter dimension")
        if np.shape(self.weights) != np.shape(self.s_obs):
            raise ShapeError("weights length must match the summary dimension")
        if not self.bounds.contains(self.theta_obs.values):
            raise DomainError("observed parameter lies outside the bounds")

    @property
    def dim(self):
        return self.bounds.dim

    @property
    def summary_dim(self):
        return int(np.size(self.s_obs))

    def parameter(self, values) -> ParameterVector:
        return ParameterVector(values, self.bounds)

    def sample_prior(self, rng: RngStream, n):
        g = rng.generator
        return np.column_stack([p.sample(g, n) for p in self.prior])

    def prior_logpdf(self, theta):
        theta = np.atleast_2d(theta)
        return sum(p.logpdf(theta[:, j]) for j, p in enumerate(self.prior))

    def simulate(self, theta, rng: RngStream):
        theta = np.asarray(theta, float).ravel()
        return np.atleast_1d(np.asarray(self.simulate_fn(theta, rng), float)).ravel()

    def simulate_batch(self, thetas, rng: RngStream):
        thetas = np.atleast_2d(np.asarray(thetas, float))
        if self.batch_fn is not None:
            out = np.asarray(self.batch_fn(thetas, rng), float)
            return out.reshape(thetas.shape[0], -1)
        return np.array([self.simulate(t, rng.child(i)) for i, t in enumerate(thetas)])

    def discrepancy(self, summary):
        return euclidean_discrepancy(self.s_obs, summary, self.weights)
