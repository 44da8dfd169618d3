"""Exact GP regression with an ARD RBF kernel plus a constant (bias) kernel.

Hyperparameters are fitted by maximizing the log marginal likelihood plus
gamma log-priors, in log space, with analytic gradients.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import DomainError, InsufficientDataError, ModelStateError, ShapeError
from .mathcore import JITTER, RngStream, cholesky_with_jitter, rbf_kernel_matrix

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2 * np.pi))
LOG_BOUNDS = (-9.0, 7.0)


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) on a positive hyperparameter."""

    shape: float
    rate: float

    @classmethod
    def from_moments(cls, mean, cv=1.0):
        shape = 1.0 / cv**2
        return cls(shape, shape / mean)

    @property
    def mean(self):
        return self.shape / self.rate

    def logpdf(self, x):
        from scipy.special import gammaln

        return self.shape * np.log(self.rate) - gammaln(self.shape) + (self.shape - 1) * np.log(x) - self.rate * x

    def dlogpdf_dlog(self, x):
        """Derivative of the log density with respect to ``log x``."""
        return (self.shape - 1.0) - self.rate * x


@dataclass(frozen=True)
class GPConfig:
    lengthscale_fraction: float = 0.1
    variance_mean: float = 1.0
    bias_mean: float = 1.0
    noise_mean: float = 0.1
    prior_cv: float = 1.0
    restarts: int = 5
    max_evals: int = 50
    refit_every: int = 10


def default_priors(X, config: GPConfig = GPConfig()):
    """Moment-matched gamma priors for (lengthscales..., variance, bias, noise)."""
    X = np.atleast_2d(X)
    span = X.max(0) - X.min(0)
    span = np.where(span > 0, span, 1.0)
    priors = [GammaPrior.from_moments(config.lengthscale_fraction * s, config.prior_cv) for s in span]
    priors.append(GammaPrior.from_moments(config.variance_mean, config.prior_cv))
    priors.append(GammaPrior.from_moments(config.bias_mean, config.prior_cv))
    priors.append(GammaPrior.from_moments(config.noise_mean, config.prior_cv))
    return tuple(priors)


class GPModel:
    """GP on standardized inputs/targets.

    ``log_params`` holds ``log`` of (lengthscales..., variance, bias variance,
    noise variance).
    """

    def __init__(self, X, y, log_params, priors=None):
        self.X = np.atleast_2d(np.asarray(X, float))
        self.y = np.asarray(y, float).ravel()
        if self.X.shape[0] != self.y.size:
            raise ShapeError("X and y must have the same number of rows")
        self.log_params = np.asarray(log_params, float).copy()
        if self.log_params.size != self.X.shape[1] + 3:
            raise ShapeError("expected d + 3 hyperparameters")
        self.priors = tuple(priors) if priors is not None else default_priors(self.X)
        self._factorize()

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def lengthscales(self):
        return np.exp(self.log_params[: self.dim])

    @property
    def variance(self):
        return float(np.exp(self.log_params[self.dim]))

    @property
    def bias(self):
        return float(np.exp(self.log_params[self.dim + 1]))

    @property
    def noise(self):
        return float(np.exp(self.log_params[self.dim + 2]))

    def kernel(self, A, B):
        if A is B:
            return rbf_kernel_matrix(A, A, self.lengthscales, self.variance) + self.bias
        return rbf_kernel_matrix(A, B, self.lengthscales, self.variance) + self.bias

    def _factorize(self):
        K = self.kernel(self.X, self.X) + self.noise * np.eye(self.X.shape[0])
        self.L, self.jitter = cholesky_with_jitter(K, JITTER)
        self.alpha = cho_solve((self.L, True), self.y)

    def with_data(self, X, y):
        """Same hyperparameters and priors, new evidence."""
        return GPModel(X, y, self.log_params, self.priors)

    def predict(self, Xs, include_noise=False):
        Xs = np.atleast_2d(np.asarray(Xs, float))
        if Xs.shape[1] != self.dim:
            raise ShapeError(f"expected inputs of dimension {self.dim}")
        Ks = self.kernel(self.X, Xs)
        mean = Ks.T @ self.alpha
        V = solve_triangular(self.L, Ks, lower=True, check_finite=False)
        var = self.variance + self.bias - (V * V).sum(0)
        var = np.maximum(var, 0.0)
        if include_noise:
            var = var + self.noise
        return mean, var

    def log_marginal_likelihood(self):
        n = self.y.size
        return float(-0.5 * self.y @ self.alpha - np.log(np.diag(self.L)).sum() - 0.5 * n * LOG_2PI)

    def log_prior(self):
        values = np.exp(self.log_params)
        return float(sum(p.logpdf(v) for p, v in zip(self.priors, values)))

    def objective(self):
        return self.log_marginal_likelihood() + self.log_prior()

    def to_dict(self):
        return {
            "format": "lfidgp.gp",
            "version": 1,
            "log_params": self.log_params.tolist(),
            "priors": [[p.shape, p.rate] for p in self.priors],
            "X": self.X.tolist(),
            "y": self.y.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "lfidgp.gp":
            raise ValueError("unrecognized GP model file")
        return cls(d["X"], d["y"], d["log_params"], [GammaPrior(*p) for p in d["priors"]])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def lml_and_grad(log_params, X, y, priors=None):
    """Log marginal likelihood (+ log priors if given) and its gradient in log space."""
    X = np.atleast_2d(X)
    n, d = X.shape
    p = np.exp(log_params)
    ls, var, bias, noise = p[:d], p[d], p[d + 1], p[d + 2]
    Krbf = rbf_kernel_matrix(X, X, ls, var)
    K = Krbf + bias + noise * np.eye(n)
    L, _ = cholesky_with_jitter(K, JITTER)
    alpha = cho_solve((L, True), y)
    value = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv  # dL/dK = W / 2
    grad = np.empty(d + 3)
    for j in range(d):
        D2 = (X[:, j : j + 1] - X[:, j : j + 1].T) ** 2 / ls[j] ** 2
        grad[j] = 0.5 * np.sum(W * Krbf * D2)
    grad[d] = 0.5 * np.sum(W * Krbf)
    grad[d + 1] = 0.5 * bias * W.sum()
    grad[d + 2] = 0.5 * noise * np.trace(W)
    if priors is not None:
        value += sum(pr.logpdf(v) for pr, v in zip(priors, p))
        grad += np.array([pr.dlogpdf_dlog(v) for pr, v in zip(priors, p)])
    return float(value), grad


def gp_fit_map(X, y, rng: RngStream, config: GPConfig = GPConfig(), priors=None,
               start=None) -> GPModel:
    """MAP hyperparameters by multi-start L-BFGS-B in log space.

    The first start is ``start`` if given, else the prior means; further
    starts are prior draws.  The best objective over all starts wins, so the
    result is never worse than the first start.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).ravel()
    if X.shape[0] < 2:
        raise InsufficientDataError("a GP fit needs at least two points")
    priors = tuple(priors) if priors is not None else default_priors(X, config)
    first = np.log([p.mean for p in priors]) if start is None else np.asarray(start, float)
    g = rng.generator
    starts = [first]
    for _ in range(config.restarts - 1):
        draw = np.array([g.gamma(p.shape, 1.0 / p.rate) for p in priors])
        starts.append(np.log(np.maximum(draw, 1e-6)))

    def neg(lp):
        try:
            v, gr = lml_and_grad(lp, X, y, priors)
        except Exception:  # numerical failure deep in a restart: treat as a wall
            return 1e25, np.zeros_like(lp)
        if not np.isfinite(v):
            return 1e25, np.zeros_like(lp)
        return -v, -gr

    bounds = [LOG_BOUNDS] * (X.shape[1] + 3)
    best_x = np.clip(first, *LOG_BOUNDS)
    best_f = neg(best_x)[0]
    for s in starts:
        s = np.clip(s, *LOG_BOUNDS)
        res = minimize(neg, s, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxfun": config.max_evals})
        if res.fun < best_f:
            best_f, best_x = float(res.fun), res.x
    log.debug("GP MAP objective %.4f", -best_f)
    return GPModel(X, y, best_x, priors)


def gp_predict(model: GPModel, X, bounds=None):
    """Posterior latent mean and variance; ``bounds`` (if given) must contain every row."""
    if bounds is not None and not np.all(bounds.contains(np.atleast_2d(X))):
        raise DomainError("prediction input outside the parameter bounds")
    return model.predict(X)


def lcb_acquisition(mean, var, eta2):
    """``mean - sqrt(eta2 * var)``."""
    if np.any(np.asarray(eta2) < 0):
        raise DomainError("exploration weight must be non-negative")
    return np.asarray(mean) - np.sqrt(eta2 * np.maximum(var, 0.0))


def require_fitted(model):
    if model is None:
        raise ModelStateError("surrogate has not been fitted")
    return model
