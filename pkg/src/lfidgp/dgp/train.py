"""Training: Adam on everything except the final layer's q(u), which takes natural-gradient steps."""

from __future__ import annotations

import logging

import numpy as np

from .. import autodiff as ad
from ..errors import TrainingDivergedError
from ..mathcore import RngStream
from .model import LVDGPModel, iwvi_bound

log = logging.getLogger(__name__)


class Adam:
    """Adam ascent on a dict of arrays; moments grow with resized entries."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def _moments(self, name, shape):
        m = self.m.get(name)
        if m is None or m.shape != shape:
            old_m, old_v = m, self.v.get(name)
            m, v = np.zeros(shape), np.zeros(shape)
            if old_m is not None and old_m.ndim == len(shape) and old_m.ndim == 1:
                n = min(old_m.shape[0], shape[0])
                m[:n], v[:n] = old_m[:n], old_v[:n]
            self.m[name], self.v[name] = m, v
        return self.m[name], self.v[name]

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        out = {}
        for name, x in params.items():
            g = grads[name]
            m, v = self._moments(name, np.shape(x))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            out[name] = x + self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out

    def state_dict(self):
        return {"t": self.t, "m": {k: v.tolist() for k, v in self.m.items()},
                "v": {k: v.tolist() for k, v in self.v.items()}}


def natural_gradient_step(q_mu, q_S, g_mu, g_S, step):
    """One step on a Gaussian ``N(q_mu, q_S)`` along the natural gradient.

    With natural parameters ``t1 = S^-1 m``, ``t2 = -S^-1 / 2`` and expectation
    parameters ``e1 = m``, ``e2 = S + m m^T``, the natural gradient equals the
    ordinary gradient with respect to the expectation parameters:
    ``dL/de1 = g_mu - 2 g_S m`` and ``dL/de2 = g_S``.  The step is halved until
    the updated precision stays positive definite.
    """
    g_S = 0.5 * (g_S + g_S.T)
    prec = np.linalg.inv(q_S)
    prec = 0.5 * (prec + prec.T)
    t1 = prec @ q_mu
    t2 = -0.5 * prec
    d1 = g_mu - 2.0 * g_S @ q_mu
    d2 = g_S
    while step > 1e-8:
        new_t2 = t2 + step * d2
        new_prec = -2.0 * new_t2
        try:
            Lp = np.linalg.cholesky(new_prec)
        except np.linalg.LinAlgError:
            step *= 0.5
            continue
        new_t1 = t1 + step * d1
        eye = np.eye(q_S.shape[0])
        Linv = np.linalg.solve(Lp, eye)  # noqa: small M, explicit inverse is fine
        S = Linv.T @ Linv
        S = 0.5 * (S + S.T)
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            step *= 0.5
            continue
        return S @ new_t1, S
    return q_mu, q_S


class DGPTrainer:
    """Holds optimizer state across repeated training calls on one model."""

    def __init__(self, model: LVDGPModel):
        self.model = model
        self.adam = Adam(model.config.adam_step)
        self.natgrad_step = model.config.natgrad_step

    def gradient(self, noise):
        """Bound value and gradients at the current parameters for fixed noise."""
        model = self.model
        arrays = model.all_params()
        nodes = {k: ad.Node(v, name=k) for k, v in arrays.items()}
        out = iwvi_bound(model, nodes, noise, model.X, model.y)
        grads = ad.backward(out)
        return float(out.value), {k: grads[n] for k, n in nodes.items()}

    def step(self, rng: RngStream):
        model = self.model
        noise = model.draw_noise(rng)
        value, grads = self.gradient(noise)
        if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            snapshot = model.to_dict()
            raise TrainingDivergedError(
                f"non-finite bound after {len(model.trace)} steps", snapshot=snapshot
            )
        new = self.adam.step(model.adam_params(), grads)
        ng = model.natgrad_params()
        q_mu, q_S = natural_gradient_step(
            ng["final.q_mu"], ng["final.q_S"], grads["final.q_mu"], grads["final.q_S"],
            self.natgrad_step,
        )
        new["final.q_mu"], new["final.q_S"] = q_mu, q_S
        model.set_params(new)
        model.trace.append(value)
        return value

    def train(self, steps: int, rng: RngStream):
        if steps < 1:
            raise ValueError("steps must be >= 1")
        for _ in range(steps):
            self.step(rng)
        self.model.trained = True
        return self.model


def dgp_train(model: LVDGPModel, steps: int, rng: RngStream, trainer: DGPTrainer | None = None):
    """Maximize the importance-weighted bound for ``steps`` iterations."""
    trainer = trainer or DGPTrainer(model)
    return trainer.train(steps, rng)
