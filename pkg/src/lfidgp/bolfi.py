"""Bayesian optimization of the discrepancy with a quantile-conditioned LCB acquisition."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import truncnorm

from .errors import DomainError, InsufficientDataError, SimulatorFailure
from .mathcore import Bounds, RngStream, empirical_quantile
from .simulators import SimulatorSpec
from .surrogates import Surrogate

log = logging.getLogger(__name__)

INITIAL, ACQUIRED = "initial", "acquired"


@dataclass
class EvidenceSet:
    """Simulated (theta, discrepancy) pairs in raw units, in acquisition order."""

    thetas: np.ndarray
    discrepancies: np.ndarray
    provenance: list = field(default_factory=list)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), [])

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, float))
        self.discrepancies = np.asarray(self.discrepancies, float).ravel()
        if self.thetas.shape[0] != self.discrepancies.size or len(self.provenance) != self.discrepancies.size:
            raise ValueError("evidence columns must have equal lengths")
        if np.any(self.discrepancies < 0):
            raise DomainError("discrepancies are non-negative")

    def __len__(self):
        return self.discrepancies.size

    def append(self, theta, delta, tag):
        if delta < 0:
            raise DomainError("discrepancies are non-negative")
        self.thetas = np.vstack([self.thetas, np.reshape(theta, (1, -1))])
        self.discrepancies = np.append(self.discrepancies, float(delta))
        self.provenance.append(tag)

    def count(self, tag):
        return sum(1 for p in self.provenance if p == tag)


@dataclass(frozen=True)
class AcquisitionConfig:
    eps_q: float = 0.3
    delta: float = 0.1
    eta2: float | None = None  # fixed exploration weight; None uses the schedule
    restarts: int = 10
    memory: int = 10
    max_iter: int = 50
    probes: int = 256
    fd_step: float = 1e-4
    noise_fraction: float = 0.05
    batch_size: int = 1

    def __post_init__(self):
        if not 0.0 < self.eps_q <= 1.0:
            raise DomainError("eps_q must lie in (0, 1]")
        if self.restarts < 1 or self.probes < 1 or self.batch_size < 1:
            raise DomainError("restarts, probes and batch size must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise DomainError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class QuantileMoments:
    mean: float
    variance: float
    count: int


def quantile_moments(samples, eps_q) -> QuantileMoments:
    """Mean and unbiased variance of the samples at or below the lower ``eps_q`` quantile."""
    s = np.asarray(samples, float).ravel()
    if s.size == 0:
        raise InsufficientDataError("quantile_moments of an empty sample")
    if not 0.0 < eps_q <= 1.0:
        raise DomainError("eps_q must lie in (0, 1]")
    kept = s[s <= empirical_quantile(s, eps_q)]
    var = float(kept.var(ddof=1)) if kept.size > 1 else 0.0
    return QuantileMoments(float(kept.mean()), var, int(kept.size))


def eta_squared(t, dim, delta=0.1):
    """GP-UCB style exploration weight ``2 log(t^(d/2 + 2) pi^2 / (3 delta))``."""
    if t < 1:
        raise DomainError("acquisition counter starts at 1")
    return 2.0 * math.log(t ** (dim / 2.0 + 2.0) * math.pi**2 / (3.0 * delta))


def quantile_lcb(surrogate: Surrogate, thetas, eta2, config: AcquisitionConfig, noise=None):
    """``mu_q - sqrt(eta2 * nu_q)`` at each row of ``thetas`` (raw units)."""
    if eta2 < 0:
        raise DomainError("exploration weight must be non-negative")
    mu, nu, _ = surrogate.quantile_moments(np.atleast_2d(thetas), config.eps_q, noise)
    return mu - np.sqrt(eta2 * nu)


def minimize_acquisition(fn, bounds: Bounds, config: AcquisitionConfig, rng: RngStream):
    """Multi-start L-BFGS-B on a deterministic vectorized objective ``fn((B, d)) -> (B,)``.

    The box is mapped to the unit cube; gradients are central differences with
    step ``fd_step`` in unit coordinates.  Starts are the best of
    ``config.probes`` uniform probes.  Returns ``(theta, value, used_fallback)``.
    """
    d = bounds.dim
    lo, width = bounds.lower, bounds.width

    def to_theta(U):
        return lo + width * np.clip(U, 0.0, 1.0)

    U0 = rng.generator.random((config.probes, d))
    f0 = np.asarray(fn(to_theta(U0)), float)
    f0 = np.where(np.isfinite(f0), f0, np.inf)
    order = np.argsort(f0, kind="stable")
    best_u, best_f = U0[order[0]].copy(), float(f0[order[0]])
    h = config.fd_step
    eye = np.eye(d)

    def value_and_grad(u):
        pts = np.vstack([u, u + h * eye, u - h * eye])
        vals = np.asarray(fn(to_theta(pts)), float)
        up = np.minimum(u + h, 1.0) - u
        dn = u - np.maximum(u - h, 0.0)
        span = np.where(up + dn > 0, up + dn, 1.0)
        return vals[0], (vals[1 : d + 1] - vals[d + 1 :]) / span

    failures = 0
    for i in order[: config.restarts]:
        try:
            res = minimize(value_and_grad, U0[i], jac=True, method="L-BFGS-B",
                           bounds=[(0.0, 1.0)] * d,
                           options={"maxcor": config.memory, "maxiter": config.max_iter})
            val = float(fn(to_theta(res.x[None, :]))[0])
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.debug("acquisition restart failed: %s", exc)
            failures += 1
            continue
        if not np.isfinite(val):
            failures += 1
            continue
        if val < best_f:
            best_u, best_f = np.clip(res.x, 0.0, 1.0), val
    fallback = failures == min(config.restarts, len(order))
    if fallback:
        log.warning("all acquisition restarts failed; using the best random probe")
    return to_theta(best_u[None, :])[0], best_f, fallback


def jitter_batch(theta, bounds: Bounds, n, config: AcquisitionConfig, rng: RngStream):
    """``n`` points around ``theta`` with Gaussian noise truncated to the box."""
    scale = config.noise_fraction * bounds.width
    a = (bounds.lower - theta) / scale
    b = (bounds.upper - theta) / scale
    z = truncnorm.rvs(a, b, size=(n, bounds.dim), random_state=rng.generator)
    return bounds.clip(theta + z * scale)


class CountingSimulator:
    """Wraps a simulator and counts (and optionally logs) every call."""

    def __init__(self, spec: SimulatorSpec, log_path=None):
        self.spec = spec
        self.calls = 0
        self.failures = 0
        self.log_path = log_path
        self._fh = None
        self._writer = None
        if log_path is not None:
            self._fh = open(log_path, "w", newline="")
            self._writer = csv.writer(self._fh)
            cols = [f"theta_{j}" for j in range(spec.dim)]
            self._writer.writerow(["index", *cols, "discrepancy", "provenance", "status", "wall_time"])

    def __call__(self, theta, rng: RngStream, tag):
        start = time.perf_counter()
        self.calls += 1
        status = "ok"
        try:
            s = self.spec.simulate(theta, rng)
            delta = float(self.spec.discrepancy(s))
            if not np.isfinite(delta):
                raise SimulatorFailure("non-finite discrepancy")
        except SimulatorFailure:
            self.failures += 1
            delta, status = float("nan"), "failed"
        if self._writer is not None:
            self._writer.writerow([self.calls, *[repr(float(x)) for x in theta], repr(delta), tag,
                                   status, f"{time.perf_counter() - start:.6f}"])
        return delta

    def close(self):
        if self._fh is not None:
            self._fh.close()


@dataclass
class BolfiResult:
    surrogate: Surrogate
    evidence: EvidenceSet
    simulator_calls: int
    fallbacks: int = 0


def _simulate_once_more(sim, theta_fn, rng, index, tag):
    """Simulate; on failure draw a replacement point once, then give up."""
    theta = theta_fn(0)
    delta = sim(theta, rng.child(index).child(0), tag)
    if np.isfinite(delta):
        return theta, delta
    theta = theta_fn(1)
    delta = sim(theta, rng.child(index).child(1), tag)
    if np.isfinite(delta):
        return theta, delta
    raise SimulatorFailure(f"simulator failed twice at call {index}")


def bolfi_run(spec: SimulatorSpec, surrogate: Surrogate, n_init, s_total, rng: RngStream,
              config: AcquisitionConfig = AcquisitionConfig(), log_path=None) -> BolfiResult:
    """Prior sampling, then acquisitions until ``s_total`` successful simulations.

    Streams: ``rng.child(0)`` prior draws, ``child(1)`` surrogate training,
    ``child(2)`` acquisitions, ``child(3)`` simulator calls.
    """
    if not 1 < n_init <= s_total:
        raise DomainError("need 2 <= n_init <= s_total")
    sim = CountingSimulator(spec, log_path)
    evidence = EvidenceSet.empty(spec.dim)
    prior_rng, train_rng, acq_rng, sim_rng = (rng.child(i) for i in range(4))
    fallbacks = 0
    try:
        initial = spec.sample_prior(prior_rng, n_init)
        for i in range(n_init):
            theta, delta = _simulate_once_more(
                sim, lambda attempt, i=i: initial[i] if attempt == 0 else spec.sample_prior(prior_rng, 1)[0],
                sim_rng, i, INITIAL)
            evidence.append(theta, delta, INITIAL)
        surrogate.fit(evidence.thetas, evidence.discrepancies, train_rng.child(0))

        t = 0
        while len(evidence) < s_total:
            t += 1
            step_rng = acq_rng.child(t)
            eta2 = config.eta2 if config.eta2 is not None else eta_squared(t, spec.dim, config.delta)
            noise = surrogate.frozen_noise(step_rng.child(0))

            def acq(thetas, noise=noise, eta2=eta2):
                return quantile_lcb(surrogate, thetas, eta2, config, noise)

            best, _, fb = minimize_acquisition(acq, spec.bounds, config, step_rng.child(1))
            fallbacks += int(fb)
            n_new = min(config.batch_size, s_total - len(evidence))
            batch = [best]
            if n_new > 1:
                batch += list(jitter_batch(best, spec.bounds, n_new - 1, config, step_rng.child(2)))
            new_t, new_d = [], []
            for theta in batch:
                index = len(evidence) + len(new_t)
                theta, delta = _simulate_once_more(
                    sim, lambda attempt, theta=theta: theta if attempt == 0 else
                    jitter_batch(theta, spec.bounds, 1, config, step_rng.child(3))[0],
                    sim_rng, index, ACQUIRED)
                new_t.append(theta)
                new_d.append(delta)
            for theta, delta in zip(new_t, new_d):
                evidence.append(theta, delta, ACQUIRED)
            surrogate.add(np.array(new_t), np.array(new_d), train_rng.child(1).child(t))
        surrogate.finalize(train_rng.child(2))
    finally:
        sim.close()
    successes = sim.calls - sim.failures
    assert successes == len(evidence) == s_total, "simulator budget accounting broke"
    return BolfiResult(surrogate, evidence, sim.calls, fallbacks)
