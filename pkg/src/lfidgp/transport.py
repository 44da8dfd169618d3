"""Debiased entropic optimal transport between weighted point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, ShapeError


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float | None = None  # None: 0.05 x median pairwise squared distance
    epsilon_fraction: float = 0.05
    max_iter: int = 5000
    tol: float = 1e-4


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    converged: bool
    iterations: int
    epsilon: float


def sq_distances(A, B):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _weights(w, n):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, float).ravel()
    if w.size != n or np.any(w < 0) or w.sum() <= 0:
        raise DomainError("weights must be non-negative, one per point, with positive sum")
    return w / w.sum()


def default_epsilon(A, B, fraction=0.05, max_points=2000):
    """``fraction`` times the median pairwise squared distance within the pooled cloud."""
    P = np.vstack([np.atleast_2d(A), np.atleast_2d(B)])
    if P.shape[0] > max_points:
        P = P[np.linspace(0, P.shape[0] - 1, max_points).astype(int)]
    D = sq_distances(P, P)
    iu = np.triu_indices(P.shape[0], 1)
    med = float(np.median(D[iu])) if iu[0].size else 0.0
    return fraction * med if med > 0 else fraction


def _lse(X, axis):
    m = X.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (np.log(np.exp(X - m).sum(axis=axis, keepdims=True)) + m).squeeze(axis)


def entropic_ot(A, B, epsilon, a=None, b=None, max_iter=5000, tol=1e-4, symmetric=None,
                absorb=30.0):
    """Entropic OT cost ``<a, f> + <b, g>`` at the Sinkhorn fixed point.

    Dual potentials are annealed down from the cost scale to ``epsilon``.  The
    iteration runs on scalings ``u, v`` of a kernel that has the current
    potentials absorbed (``f = f0 + eps log u``); the kernel is rebuilt at
    every change of ``eps`` and whenever ``|log u|`` or ``|log v|`` passes
    ``absorb``, so the matrix-vector products never under- or overflow.  For a
    cloud against itself the single potential takes averaged steps
    ``f <- (f + T(f)) / 2``; otherwise ``f`` and ``g`` alternate.  Stops once a
    sweep moves the potentials by less than ``tol * epsilon``.  Returns
    ``(value, converged, iterations)``.
    """
    if symmetric is None:
        symmetric = A is B and (a is b)
    C = sq_distances(A, B)
    n, m = C.shape
    a = _weights(a, n)
    b = _weights(b, m)
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)

    def t_f(g, eps):
        return -eps * _lse(lb[None, :] + (g[None, :] - C) / eps, axis=1)

    def t_g(f, eps):
        return -eps * _lse(la[:, None] + (f[:, None] - C) / eps, axis=0)

    eps = max(float(C.max()) if C.size else 0.0, epsilon)
    f = t_f(np.zeros(m), eps)
    g = f.copy() if symmetric else t_g(f, eps)
    K = None
    it, converged = 0, False
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        while it < max_iter:
            it += 1
            annealing = eps > epsilon
            if annealing or K is None:
                eps = max(eps * 0.5, epsilon)
                K = np.exp((f[:, None] + g[None, :] - C) / eps)
                f0, g0 = f, g
                lu, lv = np.zeros(n), np.zeros(m)
            if symmetric:
                lun = 0.5 * (lu - np.log(K @ (b * np.exp(lu))))
                lvn = lun
            else:
                lun = -np.log(K @ (b * np.exp(lv)))
                lvn = -np.log(K.T @ (a * np.exp(lun)))
            fn, gn = f0 + eps * lun, g0 + eps * lvn
            if not (np.all(np.isfinite(fn[a > 0])) and np.all(np.isfinite(gn[b > 0]))):
                # kernel lost precision: one exact log-domain sweep from the last iterate
                fn = 0.5 * (f + t_f(f, eps)) if symmetric else t_f(g, eps)
                gn = fn if symmetric else t_g(fn, eps)
                K = None
            move = max(np.abs(fn - f).max(initial=0.0), np.abs(gn - g).max(initial=0.0)) / eps
            f, g = fn, gn
            lu, lv = lun, lvn
            if K is not None and max(np.abs(lu).max(initial=0.0), np.abs(lv).max(initial=0.0)) > absorb:
                K = None
            if K is None:
                # rebuild at the same eps on the next sweep
                K = np.exp((f[:, None] + g[None, :] - C) / eps)
                f0, g0 = f, g
                lu, lv = np.zeros(n), np.zeros(m)
            if not annealing and move < tol:
                converged = True
                break
    fa = np.where(a > 0, f, 0.0)
    gb = np.where(b > 0, g, 0.0)
    return float(a @ fa + b @ gb), converged, it


def sinkhorn_divergence(A, B, config: SinkhornConfig = SinkhornConfig(), a=None, b=None):
    """``OT(A, B) - OT(A, A)/2 - OT(B, B)/2`` with squared Euclidean cost.

    Returns a :class:`SinkhornResult`; ``converged`` is False if any of the
    three solves hit ``max_iter`` (the value is still the last iterate).
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise InsufficientDataError("both sample sets must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ShapeError("sample sets must share their dimension")
    eps = config.epsilon if config.epsilon is not None else default_epsilon(A, B, config.epsilon_fraction)
    if not eps > 0:
        raise DomainError("entropic regularization must be positive")
    ab, c1, i1 = entropic_ot(A, B, eps, a, b, config.max_iter, config.tol)
    aa, c2, i2 = entropic_ot(A, A, eps, a, a, config.max_iter, config.tol)
    bb, c3, i3 = entropic_ot(B, B, eps, b, b, config.max_iter, config.tol)
    return SinkhornResult(ab - 0.5 * aa - 0.5 * bb, c1 and c2 and c3, max(i1, i2, i3), eps)


def scaled_wasserstein(distances: dict) -> dict:
    """Divide every entry by the smallest one."""
    if not distances:
        raise InsufficientDataError("nothing to scale")
    vals = np.array(list(distances.values()), float)
    if np.any(vals <= 0):
        raise DomainError("distances must be positive to be scaled")
    low = vals.min()
    return {k: float(v) / low for k, v in distances.items()}
