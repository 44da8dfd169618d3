"""Reverse-mode differentiation over numpy arrays.

A :class:`Node` wraps an array and remembers how it was computed.  Every op in
this module accepts plain arrays as well: when no argument is a ``Node`` the op
just returns the numpy result, so the same model code serves both the
differentiable training objective and fast prediction.

    >>> x = Node(np.array([1.0, 2.0]))
    >>> y = sum_(exp(x) * x)
    >>> grads = backward(y)
    >>> grads[x]  # d/dx sum(x e^x) = (1 + x) e^x
    array([ 5.43656366, 22.16716829])
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


class Node:
    __slots__ = ("value", "parents", "vjp", "name")
    __array_priority__ = 100.0

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)


def value(x):
    return x.value if isinstance(x, Node) else x


def _any_node(*xs):
    return any(isinstance(x, Node) for x in xs)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(out, seed=None):
    """Gradients of scalar ``out`` with respect to every ``Node`` it depends on.

    Returns a dict keyed by node identity.
    """
    order, seen, stack = [], set(), [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if isinstance(p, Node) and id(p) not in seen:
                stack.append((p, False))
    grads = {id(out): np.ones_like(out.value) if seed is None else np.asarray(seed, float)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        pgrads = node.vjp(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or not isinstance(p, Node):
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    return _GradMap(grads)


class _GradMap:
    def __init__(self, grads):
        self._g = grads

    def __getitem__(self, node):
        g = self._g.get(id(node))
        return np.zeros_like(node.value) if g is None else g

    def get(self, node, default=None):
        return self._g.get(id(node), default)


# -- elementwise -------------------------------------------------------------


def add(a, b):
    if not _any_node(a, b):
        return np.add(a, b)
    va, vb = value(a), value(b)
    out = va + vb
    sa, sb = np.shape(va), np.shape(vb)
    na, nb = isinstance(a, Node), isinstance(b, Node)
    return Node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g, sa) if na else None, _unbroadcast(g, sb) if nb else None),
    )


def sub(a, b):
    if not _any_node(a, b):
        return np.subtract(a, b)
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)
    na, nb = isinstance(a, Node), isinstance(b, Node)
    return Node(
        va - vb,
        (a, b),
        lambda g: (_unbroadcast(g, sa) if na else None, _unbroadcast(-g, sb) if nb else None),
    )


def mul(a, b):
    if not _any_node(a, b):
        return np.multiply(a, b)
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)
    na, nb = isinstance(a, Node), isinstance(b, Node)
    return Node(
        va * vb,
        (a, b),
        lambda g: (
            _unbroadcast(g * vb, sa) if na else None,
            _unbroadcast(g * va, sb) if nb else None,
        ),
    )


def div(a, b):
    if not _any_node(a, b):
        return np.divide(a, b)
    va, vb = value(a), value(b)
    out = va / vb
    sa, sb = np.shape(va), np.shape(vb)
    na, nb = isinstance(a, Node), isinstance(b, Node)
    return Node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / vb, sa) if na else None,
            _unbroadcast(-g * out / vb, sb) if nb else None,
        ),
    )


def neg(a):
    if not isinstance(a, Node):
        return np.negative(a)
    return Node(-a.value, (a,), lambda g: (-g,))


def power(a, p):
    if not isinstance(a, Node):
        return np.power(a, p)
    va = a.value
    return Node(va**p, (a,), lambda g: (g * p * va ** (p - 1),))


def square(a):
    if not isinstance(a, Node):
        return np.square(a)
    va = a.value
    return Node(va * va, (a,), lambda g: (2.0 * g * va,))


def exp(a):
    if not isinstance(a, Node):
        return np.exp(a)
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (g * out,))


def log(a):
    if not isinstance(a, Node):
        return np.log(a)
    va = a.value
    return Node(np.log(va), (a,), lambda g: (g / va,))


def sqrt(a):
    if not isinstance(a, Node):
        return np.sqrt(a)
    out = np.sqrt(a.value)
    return Node(out, (a,), lambda g: (0.5 * g / out,))


def maximum(a, floor: float):
    """``max(a, floor)`` against a constant floor."""
    if not isinstance(a, Node):
        return np.maximum(a, floor)
    va = a.value
    mask = va > floor
    return Node(np.maximum(va, floor), (a,), lambda g: (g * mask,))


# -- shape ---------------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    if not isinstance(a, Node):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.value.shape
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Node(out, (a,), vjp)


def reshape(a, shape):
    if not isinstance(a, Node):
        return np.reshape(a, shape)
    orig = a.value.shape
    return Node(a.value.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def transpose(a):
    if not isinstance(a, Node):
        return np.swapaxes(a, -1, -2)
    return Node(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(a, idx):
    if not isinstance(a, Node):
        return a[idx]
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Node(a.value[idx], (a,), vjp)


def concat(xs, axis=-1):
    if not _any_node(*xs):
        return np.concatenate(xs, axis=axis)
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return Node(out, tuple(xs), lambda g: tuple(np.split(g, splits, axis=axis)))


def tril(a, k=0):
    if not isinstance(a, Node):
        return np.tril(a, k)
    return Node(np.tril(a.value, k), (a,), lambda g: (np.tril(g, k),))


def diagonal(a):
    """Diagonal of the trailing two axes."""
    if not isinstance(a, Node):
        return np.diagonal(a, axis1=-2, axis2=-1)
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        idx = np.arange(shape[-1])
        out[..., idx, idx] = g
        return (out,)

    return Node(np.diagonal(a.value, axis1=-2, axis2=-1).copy(), (a,), vjp)


def embed_diagonal(a):
    """Square matrix (or batch) with ``a`` on the diagonal."""
    if not isinstance(a, Node):
        n = np.shape(a)[-1]
        out = np.zeros(np.shape(a) + (n,))
        out[..., np.arange(n), np.arange(n)] = a
        return out
    n = a.value.shape[-1]
    out = np.zeros(a.value.shape + (n,))
    idx = np.arange(n)
    out[..., idx, idx] = a.value
    return Node(out, (a,), lambda g: (g[..., idx, idx].copy(),))


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    if not _any_node(a, b):
        return np.matmul(a, b)
    va, vb = value(a), value(b)
    sa, sb = np.shape(va), np.shape(vb)

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(vb, -1, -2), sa) if isinstance(a, Node) else None
        gb = _unbroadcast(np.swapaxes(va, -1, -2) @ g, sb) if isinstance(b, Node) else None
        return ga, gb

    return Node(va @ vb, (a, b), vjp)


def _phi(X):
    """Lower triangle with the diagonal halved."""
    out = np.tril(X)
    out[np.diag_indices_from(out)] *= 0.5
    return out


def cholesky(a):
    if not isinstance(a, Node):
        return np.linalg.cholesky(a)
    L = np.linalg.cholesky(a.value)
    return Node(L, (a,), lambda Lbar: (_cholesky_vjp(L, Lbar),))


def _cholesky_vjp(L, Lbar):
    P = _phi(L.T @ Lbar)
    S = solve_triangular(L, solve_triangular(L, P.T, lower=True, trans="T", check_finite=False).T,
                         lower=True, trans="T", check_finite=False)
    # S = L^{-T} P L^{-1}; gradient w.r.t. a symmetric input
    return 0.5 * (S + S.T)


def solve_lower(L, B, transpose_L=False):
    """``L^{-1} B`` (or ``L^{-T} B``) for lower-triangular ``L``."""
    trans = "T" if transpose_L else "N"
    if not _any_node(L, B):
        return solve_triangular(L, B, lower=True, trans=trans, check_finite=False)
    vL, vB = value(L), value(B)
    X = solve_triangular(vL, vB, lower=True, trans=trans, check_finite=False)

    def vjp(g):
        other = "N" if transpose_L else "T"
        Bbar = solve_triangular(vL, g, lower=True, trans=other, check_finite=False)
        if not isinstance(L, Node):
            return None, Bbar
        X2 = X if X.ndim == 2 else X[:, None]
        B2 = Bbar if Bbar.ndim == 2 else Bbar[:, None]
        Lbar = -np.tril(X2 @ B2.T) if transpose_L else -np.tril(B2 @ X2.T)
        return Lbar, Bbar

    return Node(X, (L, B), vjp)


def logsumexp(a, axis=None, keepdims=False):
    va = value(a)
    m = np.max(va, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(va - m)
    s = e.sum(axis=axis, keepdims=True)
    out_k = np.log(s) + m
    out = out_k if keepdims else (np.squeeze(out_k, axis=axis) if axis is not None else out_k.reshape(()))
    if not isinstance(a, Node):
        return out
    soft = e / s

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis) if axis is not None else np.reshape(g, (1,) * va.ndim)
        return (g * soft,)

    return Node(out, (a,), vjp)


def log_mean_exp(a, axis):
    n = value(a).shape[axis]
    return sub(logsumexp(a, axis=axis), np.log(n))


def rbf(X1, X2, log_lengthscale, variance=1.0):
    """Fused squared-exponential cross-covariance ``variance * exp(-|x - x'|^2_l / 2)``."""
    v1, v2, vll = value(X1), value(X2), value(log_lengthscale)
    inv2 = np.exp(-2.0 * vll)
    A = v1 * np.sqrt(inv2)
    B = v2 * np.sqrt(inv2)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    K = variance * np.exp(-0.5 * sq)
    if not _any_node(X1, X2, log_lengthscale):
        return K
    return Node(K, (X1, X2, log_lengthscale),
                lambda Kbar: rbf_vjp(v1, v2, vll, variance, K, Kbar))


def rbf_vjp(v1, v2, vll, variance, K, Kbar):
    """Pullback of :func:`rbf` to ``(X1, X2, log_lengthscale)``."""
    inv2 = np.exp(-2.0 * np.asarray(vll, float))
    G = Kbar * K
    r = G.sum(1)
    c = G.sum(0)
    GX2 = G @ v2
    g1 = -(v1 * r[:, None] - GX2) * inv2
    g2 = -(v2 * c[:, None] - G.T @ v1) * inv2
    cross = (v1 * GX2).sum(0)
    gl = (r @ (v1 * v1) + c @ (v2 * v2) - 2.0 * cross) * inv2
    return g1, g2, np.reshape(gl, np.shape(vll))


def take_first(a, i):
    """``a[i]`` along the leading axis."""
    if not isinstance(a, Node):
        return a[i]
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        out[i] = g
        return (out,)

    return Node(a.value[i], (a,), vjp)
