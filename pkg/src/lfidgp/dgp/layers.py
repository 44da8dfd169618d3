"""Sparse variational GP layers in the whitened parameterization.

The functions here are written against :mod:`lfidgp.autodiff` ops, so they run
on plain arrays for prediction and on ``Node`` graphs for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .. import autodiff as ad
from ..mathcore import JITTER

LOG_2PI = float(np.log(2.0 * np.pi))
VAR_FLOOR = 1e-10


def rbf(X1, X2, log_lengthscale, variance=1.0):
    return ad.rbf(X1, X2, log_lengthscale, variance)


def inducing_cholesky(Z, log_lengthscale, variance=1.0, jitter=JITTER):
    M = ad.value(Z).shape[0]
    Kmm = rbf(Z, Z, log_lengthscale, variance)
    Kmm = 0.5 * (Kmm + ad.transpose(Kmm)) + jitter * np.eye(M)
    return ad.cholesky(Kmm)


def conditional(X, Z, log_lengthscale, q_mu, q_sqrt, *, variance=1.0, identity_mean=False,
                Lm=None, jitter=JITTER):
    """Marginal predictive mean and variance of a whitened SVGP layer.

    Shapes: ``X`` (B, Din), ``Z`` (M, Din), ``q_mu`` (M, Dout),
    ``q_sqrt`` (Dout, M, M) lower triangular.  Returns two (B, Dout) arrays.
    On autodiff inputs this runs as a single fused op.
    """
    if Lm is None and ad._any_node(X, Z, log_lengthscale, q_mu, q_sqrt):
        both = _fused_conditional(X, Z, log_lengthscale, q_mu, q_sqrt, variance,
                                  identity_mean, jitter)
        return ad.take_first(both, 0), ad.take_first(both, 1)
    return conditional_composed(X, Z, log_lengthscale, q_mu, q_sqrt, variance=variance,
                                identity_mean=identity_mean, Lm=Lm, jitter=jitter)


def conditional_composed(X, Z, log_lengthscale, q_mu, q_sqrt, *, variance=1.0,
                         identity_mean=False, Lm=None, jitter=JITTER):
    """Same as :func:`conditional`, assembled from elementary ops."""
    if Lm is None:
        Lm = inducing_cholesky(Z, log_lengthscale, variance, jitter)
    Kmn = rbf(Z, X, log_lengthscale, variance)
    A = ad.solve_lower(Lm, Kmn)  # (M, B)
    mean = ad.matmul(ad.transpose(A), q_mu)
    if identity_mean:
        mean = mean + X
    LtA = ad.matmul(ad.transpose(q_sqrt), ad.reshape(A, (1,) + ad.value(A).shape))  # (Dout, M, B)
    var_q = ad.transpose(ad.sum_(LtA * LtA, axis=1))  # (B, Dout)
    var = variance - ad.transpose(ad.sum_(A * A, axis=0, keepdims=True)) + var_q
    return mean, ad.maximum(var, VAR_FLOOR)


def _fused_conditional(X, Z, log_ls, q_mu, q_sqrt, variance, identity_mean, jitter):
    vX, vZ, vl = ad.value(X), ad.value(Z), ad.value(log_ls)
    vmu, vS = ad.value(q_mu), ad.value(q_sqrt)
    M = vZ.shape[0]
    Kmm = ad.rbf(vZ, vZ, vl, variance)
    Kmm = 0.5 * (Kmm + Kmm.T) + jitter * np.eye(M)
    Lm = np.linalg.cholesky(Kmm)
    Kmn = ad.rbf(vZ, vX, vl, variance)
    A = solve_triangular(Lm, Kmn, lower=True, check_finite=False)  # (M, B)
    mean = A.T @ vmu
    if identity_mean:
        mean = mean + vX
    P = np.swapaxes(vS, 1, 2) @ A  # (Dout, M, B)
    var = variance - (A * A).sum(0)[:, None] + (P * P).sum(1).T
    keep = var > VAR_FLOOR
    out = np.stack([mean, np.maximum(var, VAR_FLOOR)])

    def vjp(g):
        gm, gv = g[0], g[1] * keep
        Pbar = 2.0 * P * gv.T[:, None, :]  # (Dout, M, B)
        g_mu = A @ gm
        g_S = np.tril(A @ np.swapaxes(Pbar, 1, 2))
        Abar = vmu @ gm.T - 2.0 * A * gv.sum(1)[None, :] + (vS @ Pbar).sum(0)
        Kbar = solve_triangular(Lm, Abar, lower=True, trans="T", check_finite=False)
        Lbar = -np.tril(Kbar @ A.T)
        Kmm_bar = ad._cholesky_vjp(Lm, Lbar)
        gZ1, gX, gl1 = ad.rbf_vjp(vZ, vX, vl, variance, Kmn, Kbar)
        gZ2, gZ3, gl2 = ad.rbf_vjp(vZ, vZ, vl, variance, Kmm - jitter * np.eye(M), Kmm_bar)
        if identity_mean:
            gX = gX + gm
        return gX, gZ1 + gZ2 + gZ3, gl1 + gl2, g_mu, g_S

    return ad.Node(out, (X, Z, log_ls, q_mu, q_sqrt), vjp)


def kl_whitened(q_mu, q_sqrt):
    """Sum over outputs of KL(N(q_mu, q_sqrt q_sqrt^T) || N(0, I))."""
    M, Dout = ad.value(q_mu).shape
    diag = ad.diagonal(q_sqrt)
    logdet = 2.0 * ad.sum_(ad.log(diag))
    trace = ad.sum_(q_sqrt * q_sqrt)
    maha = ad.sum_(q_mu * q_mu)
    return 0.5 * (trace + maha - M * Dout - logdet)


def gaussian_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + ad.log(var)) - 0.5 * ad.square(x - mean) / var


@dataclass
class SVGPLayer:
    """One GP layer: inducing inputs, whitened q(u) and RBF hyperparameters.

    Kernel variance is held at 1 (inputs and targets are standardized).
    """

    Z: np.ndarray
    q_mu: np.ndarray
    q_sqrt: np.ndarray
    log_lengthscale: np.ndarray
    identity_mean: bool = False
    variance: float = 1.0

    def __post_init__(self):
        if self.Z.shape[0] < 1:
            raise ValueError("a layer needs at least one inducing point")
        L = self.q_sqrt
        if L.shape != (self.output_dim, self.num_inducing, self.num_inducing):
            raise ValueError(f"q_sqrt shape {L.shape} inconsistent with q_mu {self.q_mu.shape}")
        if not np.allclose(L, np.tril(L)) or np.any(np.diagonal(L, axis1=1, axis2=2) <= 0):
            raise ValueError("q_sqrt must be lower triangular with a positive diagonal")

    @property
    def num_inducing(self):
        return self.Z.shape[0]

    @property
    def input_dim(self):
        return self.Z.shape[1]

    @property
    def output_dim(self):
        return self.q_mu.shape[1]

    @classmethod
    def initial(cls, Z, output_dim, *, identity_mean, q_sqrt_scale=1.0):
        Z = np.array(Z, dtype=float)
        M, D = Z.shape
        return cls(
            Z=Z,
            q_mu=np.zeros((M, output_dim)),
            q_sqrt=np.tile(np.eye(M) * q_sqrt_scale, (output_dim, 1, 1)),
            log_lengthscale=np.full(D, 0.5 * np.log(D)),  # lengthscale sqrt(D)
            identity_mean=identity_mean,
        )

    def moments(self, X, Lm=None):
        return conditional(X, self.Z, self.log_lengthscale, self.q_mu, self.q_sqrt,
                           variance=self.variance, identity_mean=self.identity_mean, Lm=Lm)

    def sample(self, X, rng, eps=None, Lm=None):
        """Reparameterized draw from the marginal predictive at each row of ``X``."""
        mean, var = self.moments(X, Lm=Lm)
        if eps is None:
            eps = rng.normal(np.shape(mean))
        return mean + np.sqrt(var) * eps

    def kl(self):
        return float(kl_whitened(self.q_mu, self.q_sqrt))

    def to_dict(self):
        return {
            "Z": self.Z.tolist(),
            "q_mu": self.q_mu.tolist(),
            "q_sqrt": self.q_sqrt.tolist(),
            "log_lengthscale": self.log_lengthscale.tolist(),
            "identity_mean": self.identity_mean,
            "variance": self.variance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            Z=np.asarray(d["Z"], float),
            q_mu=np.asarray(d["q_mu"], float),
            q_sqrt=np.asarray(d["q_sqrt"], float),
            log_lengthscale=np.asarray(d["log_lengthscale"], float),
            identity_mean=bool(d["identity_mean"]),
            variance=float(d["variance"]),
        )


@dataclass
class LatentVariableLayer:
    """Per-datapoint Gaussian posteriors ``q(w_n) = N(a_n, b_n)`` over the latent input."""

    a: np.ndarray
    log_b: np.ndarray

    @classmethod
    def initial(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @property
    def b(self):
        return np.exp(self.log_b)

    def __len__(self):
        return self.a.size

    def extend(self, n_new):
        self.a = np.concatenate([self.a, np.zeros(n_new)])
        self.log_b = np.concatenate([self.log_b, np.zeros(n_new)])

    def augment(self, X, *, rng, index=None, zeta=None):
        """Append a latent column to ``X``.

        With ``index`` (training mode) ``w = a_n + sqrt(b_n) * zeta``; without it
        ``w ~ N(0, 1)``.
        """
        from ..errors import ModelStateError

        X = np.atleast_2d(np.asarray(X, dtype=float))
        if zeta is None:
            zeta = rng.normal(X.shape[0])
        if index is None:
            w = zeta
        else:
            index = np.atleast_1d(index)
            if np.any(index < 0) or np.any(index >= self.a.size):
                raise ModelStateError(f"training index {index} has no registered latent posterior")
            w = self.a[index] + np.sqrt(self.b[index]) * zeta
        return np.concatenate([X, np.reshape(w, (-1, 1))], axis=1)

    def to_dict(self):
        return {"a": self.a.tolist(), "log_b": self.log_b.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["a"], float), np.asarray(d["log_b"], float))
