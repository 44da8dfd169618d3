"""Raw-unit surrogates of the discrepancy used by the inference loop.

Both wrappers standardize inputs and targets with statistics of the initial
evidence and keep them fixed for the rest of the run, so acquired points never
shift the scale the model was trained on.
"""

from __future__ import annotations

import numpy as np

from .dgp import DGPConfig, DGPTrainer, LVDGPModel
from .errors import ConfigError, ModelStateError
from .gp import GPConfig, GPModel, gp_fit_map
from .mathcore import RngStream, Standardizer, fit_standardizer, quantile_rank


def batch_quantile_moments(samples, eps_q):
    """Row-wise moments of the samples at or below each row's lower ``eps_q`` quantile.

    Returns ``(mean, unbiased variance, count)``; variance is 0 when a single
    sample survives.
    """
    s = np.atleast_2d(np.asarray(samples, float))
    k = quantile_rank(s.shape[1], eps_q)
    thr = np.partition(s, k - 1, axis=1)[:, k - 1 : k]
    keep = s <= thr
    count = keep.sum(1)
    mean = np.where(keep, s, 0.0).sum(1) / count
    dev = np.where(keep, s - mean[:, None], 0.0)
    denom = np.maximum(count - 1, 1)
    var = np.where(count > 1, (dev * dev).sum(1) / denom, 0.0)
    return mean, var, count


class Surrogate:
    kind = "base"

    def __init__(self):
        self.x_std: Standardizer | None = None
        self.y_std: Standardizer | None = None
        self.X = None
        self.y = None

    @property
    def fitted(self):
        return self.x_std is not None

    def _require(self):
        if not self.fitted:
            raise ModelStateError("surrogate has not been fitted")

    def _set_initial(self, X, y):
        self.X = np.atleast_2d(np.asarray(X, float)).copy()
        self.y = np.asarray(y, float).ravel().copy()
        self.x_std = fit_standardizer(self.X)
        self.y_std = fit_standardizer(self.y)

    def _append(self, X, y):
        self.X = np.concatenate([self.X, np.atleast_2d(X)], axis=0)
        self.y = np.concatenate([self.y, np.asarray(y, float).ravel()])

    def zs(self, X):
        return self.x_std.transform(np.atleast_2d(np.asarray(X, float)))

    def ys(self):
        return self.y_std.transform(self.y[:, None])[:, 0]


class GPSurrogate(Surrogate):
    """Vanilla GP: analytic moments, hyperparameters refitted every few acquisitions."""

    kind = "gp"

    def __init__(self, config: GPConfig = GPConfig()):
        super().__init__()
        self.config = config
        self.model: GPModel | None = None
        self.acquisitions = 0

    def fit(self, X, y, rng: RngStream):
        self._set_initial(X, y)
        self.model = gp_fit_map(self.zs(self.X), self.ys(), rng, self.config)
        return self

    def _refit(self, rng):
        start = self.model.log_params
        self.model = gp_fit_map(self.zs(self.X), self.ys(), rng, self.config,
                                priors=self.model.priors, start=start)

    def add(self, X, y, rng: RngStream):
        """Append evidence; hyperparameters are refitted every ``refit_every`` additions."""
        self._require()
        self._append(X, y)
        self.acquisitions += 1
        if self.acquisitions % self.config.refit_every == 0:
            self._refit(rng)
        else:
            self.model = self.model.with_data(self.zs(self.X), self.ys())

    def finalize(self, rng: RngStream):
        self._require()
        self._refit(rng)

    def moments(self, X):
        """Latent predictive mean and variance in raw units."""
        self._require()
        m, v = self.model.predict(self.zs(X))
        s = self.y_std.scale[0]
        return self.y_std.inverse(m[:, None])[:, 0], v * s * s

    @property
    def noise_variance(self):
        s = self.y_std.scale[0]
        return self.model.noise * s * s

    def frozen_noise(self, rng: RngStream):
        return None

    def quantile_moments(self, X, eps_q, noise=None):
        # the GP predictive is Gaussian: its analytic moments stand in for the conditioned ones
        m, v = self.moments(X)
        return m, v, np.ones(m.shape, dtype=int)

    def pointwise_quantile_moments(self, X, eps_q, rng: RngStream):
        return self.quantile_moments(X, eps_q)

    def predictive_samples(self, X, p, rng: RngStream):
        m, v = self.moments(X)
        sd = np.sqrt(v + self.noise_variance)
        return m[:, None] + sd[:, None] * rng.generator.standard_normal((m.size, p))

    def to_dict(self):
        self._require()
        return {"kind": self.kind, "x_std": self.x_std.to_dict(), "y_std": self.y_std.to_dict(),
                "model": self.model.to_dict(), "X": self.X.tolist(), "y": self.y.tolist()}


class DGPSurrogate(Surrogate):
    """Latent-variable deep GP; moments come from quantile-conditioned predictive draws."""

    kind = "dgp"

    def __init__(self, config: DGPConfig = DGPConfig()):
        super().__init__()
        self.config = config
        self.model: LVDGPModel | None = None
        self.trainer: DGPTrainer | None = None

    def fit(self, X, y, rng: RngStream):
        self._set_initial(X, y)
        self.model = LVDGPModel.initial(self.zs(self.X), self.ys(), self.config, rng.child(0))
        self.trainer = DGPTrainer(self.model)
        self.trainer.train(self.config.train_steps, rng.child(1))
        return self

    def add(self, X, y, rng: RngStream):
        self._require()
        X = np.atleast_2d(X)
        self._append(X, y)
        y_new = self.y_std.transform(np.asarray(y, float).reshape(-1, 1))[:, 0]
        self.model.add_data(self.zs(X), y_new)
        if self.config.refresh_steps > 0:
            self.trainer.train(self.config.refresh_steps, rng)

    def finalize(self, rng: RngStream):
        self._require()
        if self.config.final_steps > 0:
            self.trainer.train(self.config.final_steps, rng)

    def frozen_noise(self, rng: RngStream):
        return self.model.draw_prediction_noise(self.config.num_pred_samples, rng)

    def samples(self, X, noise):
        """Raw-unit predictive draws ``(B, p)`` under frozen noise."""
        self._require()
        f = self.model.predict_samples(self.zs(X), noise=noise)
        return f * self.y_std.scale[0] + self.y_std.mean[0]

    def quantile_moments(self, X, eps_q, noise=None):
        if noise is None:
            raise ModelStateError("DGP moments need frozen prediction noise")
        return batch_quantile_moments(self.samples(X, noise), eps_q)

    def pointwise_quantile_moments(self, X, eps_q, rng: RngStream):
        """Moments from ``p`` independent predictive draws at every row of ``X``."""
        return batch_quantile_moments(self.predictive_samples(X, self.config.num_pred_samples, rng), eps_q)

    def predictive_samples(self, X, p, rng: RngStream):
        self._require()
        f = self.model.predict_samples(self.zs(X), p=p, rng=rng)
        return f * self.y_std.scale[0] + self.y_std.mean[0]

    @property
    def noise_variance(self):
        s = self.y_std.scale[0]
        return self.model.noise_variance * s * s

    def to_dict(self):
        self._require()
        return {"kind": self.kind, "x_std": self.x_std.to_dict(), "y_std": self.y_std.to_dict(),
                "model": self.model.to_dict(), "X": self.X.tolist(), "y": self.y.tolist()}


def surrogate_from_dict(d):
    kind = d.get("kind")
    if kind == "gp":
        s = GPSurrogate()
        s.model = GPModel.from_dict(d["model"])
    elif kind == "dgp":
        model = LVDGPModel.from_dict(d["model"])
        s = DGPSurrogate(model.config)
        s.model = model
        s.trainer = DGPTrainer(model)
    else:
        raise ConfigError(f"unknown surrogate kind {kind!r}")
    s.x_std = Standardizer.from_dict(d["x_std"])
    s.y_std = Standardizer.from_dict(d["y_std"])
    s.X = np.asarray(d["X"], float)
    s.y = np.asarray(d["y"], float)
    return s


def make_surrogate(kind, gp_config: GPConfig | None = None, dgp_config: DGPConfig | None = None):
    kind = kind.lower()
    if kind in ("gp", "vanilla-gp"):
        return GPSurrogate(gp_config or GPConfig())
    if kind in ("dgp", "lv-2gp", "lv-dgp"):
        return DGPSurrogate(dgp_config or DGPConfig())
    if kind == "lv-gp":
        base = dgp_config or DGPConfig()
        from dataclasses import replace

        return DGPSurrogate(replace(base, num_gp_layers=1))
    raise ConfigError(f"unknown surrogate {kind!r}; choose gp, lv-2gp or lv-gp")
