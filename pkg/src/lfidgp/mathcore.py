"""Numerical primitives shared by the surrogates, the BO loop and the evaluation code."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import (
    DomainError,
    InsufficientDataError,
    InvalidHyperparameterError,
    ShapeError,
)

JITTER = 1e-8
SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned closed box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("lower and upper bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("bounds must be finite")
        if np.any(hi <= lo):
            raise DomainError("every upper bound must exceed its lower bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, atol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - atol) & (x <= self.upper + atol), axis=-1)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def uniform(self, rng: "RngStream", n: int) -> np.ndarray:
        return self.lower + self.width * rng.generator.random((n, self.dim))

    def to_list(self):
        return [[float(a), float(b)] for a, b in zip(self.lower, self.upper)]

    @classmethod
    def from_list(cls, pairs) -> "Bounds":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


@dataclass(frozen=True)
class ParameterVector:
    """A point in simulator parameter space together with its box."""

    values: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if v.shape != (self.bounds.dim,):
            raise ShapeError(f"expected {self.bounds.dim} entries, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("parameter entries must be finite")
        if not self.bounds.contains(v):
            raise DomainError(f"parameter {v} lies outside its bounds")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


class RngStream:
    """Seeded random stream addressed by ``(seed, stream_id)``.

    Children derived with :meth:`child` are independent of the parent and of
    each other, and are themselves reproducible from the same address.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(int(p) for p in _path)
        ss = np.random.SeedSequence(
            entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(self.stream_id & 0xFFFFFFFFFFFFFFFF, *self._path),
        )
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, tag: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self._path + (int(tag),))

    def clone(self) -> "RngStream":
        """Copy including the current position in the stream."""
        return copy.deepcopy(self)

    def integers_u64(self) -> int:
        return int(self.generator.integers(0, 2**63 - 1, dtype=np.int64))

    # convenience passthroughs
    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray = field(repr=True)

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=float)))
        if np.any(self.scale <= 0):
            raise InvalidHyperparameterError("standardizer scales must be positive")

    def transform(self, data):
        return (np.asarray(data, dtype=float) - self.mean) / self.scale

    def inverse(self, data):
        return np.asarray(data, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["scale"]))


def fit_standardizer(data) -> Standardizer:
    """Column-wise mean and (ddof=0) standard deviation, scale floored at 1e-8."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientDataError("at least two rows are needed to fit a standardizer")
    mean = x.mean(axis=0)
    scale = np.maximum(x.std(axis=0), SCALE_FLOOR)
    return Standardizer(mean, scale)


def rbf_kernel_matrix(X, X2, lengthscales, variance) -> np.ndarray:
    """Squared-exponential kernel ``variance * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)``."""
    ls = np.atleast_1d(np.asarray(lengthscales, dtype=float))
    variance = float(variance)
    if np.any(ls <= 0) or not variance > 0:
        raise InvalidHyperparameterError("lengthscales and variance must be strictly positive")
    A = np.atleast_2d(np.asarray(X, dtype=float)) / ls
    same = X2 is X
    B = A if same else np.atleast_2d(np.asarray(X2, dtype=float)) / ls
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DomainError("kernel inputs must be finite")
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    K = variance * np.exp(-0.5 * sq)
    if same:
        # matmul rounding can break exact symmetry
        K = np.triu(K) + np.triu(K, 1).T
    return K


def empirical_quantile(samples, q: float) -> float:
    """Lower empirical quantile: the ceil(q*N)-th order statistic."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise InsufficientDataError("empirical_quantile of an empty sample")
    if not (0.0 < q <= 1.0):
        raise DomainError(f"quantile level {q} outside (0, 1]")
    k = quantile_rank(s.size, q)
    return float(np.partition(s, k - 1)[k - 1])


def quantile_rank(n: int, q: float) -> int:
    # guard against q*n landing a hair above an integer from rounding
    k = math.ceil(round(q * n, 9))
    return min(max(k, 1), n)


def log_mean_exp(values, axis=None):
    """``log(mean(exp(values)))`` with max-shift."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientDataError("log_mean_exp of an empty list")
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.mean(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def normal_cdf(x):
    return ndtr(x)


def normal_pdf(x, mean=0.0, var=1.0):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def cholesky_with_jitter(K, jitter=JITTER, max_jitter=1e-4):
    """Cholesky of ``K + jitter*I``, escalating jitter tenfold up to ``max_jitter``.

    Returns ``(L, jitter_used)``.
    """
    from .errors import NumericalFailureError

    n = K.shape[0]
    eye = np.eye(n)
    j = jitter
    while j <= max_jitter * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + j * eye), j
        except np.linalg.LinAlgError:
            j *= 10.0
    raise NumericalFailureError(f"matrix not positive definite with jitter up to {max_jitter}")
