"""One-dimensional test simulators on the prior box (0, 100).

Each accepts a scalar or an array of parameters and returns summaries of the
same shape, so reference sampling can run vectorized.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..mathcore import RngStream, normal_pdf

LOWER, UPPER = 0.0, 100.0

# (mean, variance) of the three bumps in the multi-peak simulator
TE1_COMPONENTS = ((30.0, 15.0), (60.0, 5.0), (100.0, 4.0))
TE1_NOISE_VAR = 0.005
TE2_NOISE_VAR = 0.01


def _check(theta):
    t = np.asarray(theta, float)
    if np.any(~np.isfinite(t)) or np.any(t < LOWER) or np.any(t > UPPER):
        raise DomainError(f"parameter outside prior support [{LOWER}, {UPPER}]")
    return t


def te1_mean(theta):
    t = np.asarray(theta, float)
    return sum(normal_pdf(t, m, v) for m, v in TE1_COMPONENTS)


def te1_simulate(theta, rng: RngStream, noise_var=TE1_NOISE_VAR):
    """Sum of three Gaussian densities at ``theta`` plus Gaussian noise."""
    t = _check(theta)
    noise = rng.generator.standard_normal(t.shape) * np.sqrt(noise_var)
    return te1_mean(t) + noise


def te2_branches(theta):
    """The two noise-free outputs: (rising logistic, falling logistic)."""
    t = np.asarray(theta, float)
    tp = np.exp(-0.1 * (t - 50.0))
    return tp / (1.0 + tp), 1.0 / (1.0 + tp)


def te2_simulate(theta, rng: RngStream, noise_var=TE2_NOISE_VAR):
    """One of two mirrored logistic curves picked by a fair coin, plus noise."""
    t = _check(theta)
    g = rng.generator
    coin = g.random(t.shape) < 0.5
    noise = g.standard_normal(t.shape) * np.sqrt(noise_var)
    up, down = te2_branches(t)
    return np.where(coin, up, down) + noise


def te3_simulate(theta, rng: RngStream):
    """``Beta(theta + 1, 5) + Beta(5, theta + 1)``; spread shrinks as theta grows."""
    t = _check(theta)
    g = rng.generator
    return g.beta(t + 1.0, 5.0) + g.beta(5.0, t + 1.0)
