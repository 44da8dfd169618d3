"""Posterior extraction from a trained surrogate, and the rejection-ABC reference."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bolfi import AcquisitionConfig, minimize_acquisition
from .errors import DegenerateVarianceError, DomainError
from .mathcore import RngStream, normal_cdf
from .simulators import SimulatorSpec, get_simulator
from .surrogates import Surrogate
from .transport import SinkhornConfig, SinkhornResult, sinkhorn_divergence

log = logging.getLogger(__name__)


def uniform_kernel(delta, eps):
    """``1/eps`` on ``[0, eps)``, zero elsewhere."""
    delta = np.asarray(delta, float)
    if eps <= 0:
        raise DomainError("tolerance must be positive")
    if np.any(delta < 0):
        raise DomainError("discrepancies are non-negative")
    return np.where(delta < eps, 1.0 / eps, 0.0)


def approximate_likelihood(mu, nu, sigma2, eps):
    """``Phi((eps - mu) / sqrt(nu + sigma2))``: probability the discrepancy falls below ``eps``."""
    total = np.asarray(nu, float) + sigma2
    if np.any(total <= 0):
        raise DegenerateVarianceError("predictive variance plus noise must be positive")
    return normal_cdf((eps - np.asarray(mu, float)) / np.sqrt(total))


def surrogate_mean_fn(surrogate: Surrogate, eps_q, rng: RngStream):
    """Deterministic mean surface: conditioned sample mean (DGP) or analytic mean (GP)."""
    noise = surrogate.frozen_noise(rng)

    def fn(thetas):
        return surrogate.quantile_moments(np.atleast_2d(thetas), eps_q, noise)[0]

    return fn


def surrogate_threshold(surrogate: Surrogate, bounds, rng: RngStream, eps_q=0.3,
                        config: AcquisitionConfig = AcquisitionConfig(), fallback_probes=10_000):
    """Minimum of the surrogate's mean surface over the box."""
    fn = surrogate_mean_fn(surrogate, eps_q, rng.child(0))
    theta, value, failed = minimize_acquisition(fn, bounds, config, rng.child(1))
    if failed or not np.isfinite(value):
        log.warning("threshold search failed; using the minimum over %d probes", fallback_probes)
        probes = bounds.uniform(rng.child(2), fallback_probes)
        value = float(np.min(fn(probes)))
    return float(value)


@dataclass
class WeightedPosterior:
    samples: np.ndarray
    weights: np.ndarray
    threshold: float = float("nan")
    flat_fallback: bool = False

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, float))
        w = np.asarray(self.weights, float).ravel()
        if w.size != self.samples.shape[0]:
            raise ValueError("one weight per sample")
        if np.any(w < 0) or not w.sum() > 0:
            raise DomainError("weights must be non-negative with positive sum")
        self.weights = w / w.sum()

    @property
    def ess(self):
        return float(1.0 / np.sum(self.weights**2))

    def mean(self):
        return self.weights @ self.samples

    def resample(self, n, rng: RngStream):
        return self.samples[systematic_resample(self.weights, n, rng)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"theta_{j}" for j in range(self.samples.shape[1])] + ["weight"])
            for row, wt in zip(self.samples, self.weights):
                w.writerow([repr(float(x)) for x in row] + [repr(float(wt))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


def systematic_resample(weights, n, rng: RngStream):
    """Indices drawn by systematic resampling (one uniform offset, evenly spaced)."""
    w = np.asarray(weights, float)
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    u = (rng.generator.random() + np.arange(n)) / n
    return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)


def weighted_posterior_samples(surrogate: Surrogate, spec: SimulatorSpec, S, rng: RngStream,
                               eps=None, eps_q=0.3, pointwise=True) -> WeightedPosterior:
    """Weight ``S`` prior draws by the surrogate's likelihood approximation.

    ``eps`` defaults to the minimum of the surrogate mean surface.  The GP uses
    its analytic moments; the DGP uses quantile-conditioned predictive draws,
    drawn independently at every point (``pointwise``) or shared by all points.
    """
    if S < 1:
        raise DomainError("need at least one posterior sample")
    if eps is None:
        eps = surrogate_threshold(surrogate, spec.bounds, rng.child(0), eps_q)
    thetas = spec.sample_prior(rng.child(1), S)
    if pointwise:
        mu, nu, _ = surrogate.pointwise_quantile_moments(thetas, eps_q, rng.child(2))
    else:
        mu, nu, _ = surrogate.quantile_moments(thetas, eps_q, surrogate.frozen_noise(rng.child(2)))
    w = approximate_likelihood(mu, nu, surrogate.noise_variance, eps)
    flat = False
    if not np.all(np.isfinite(w)) or w.sum() <= 0:
        log.warning("surrogate likelihood vanished everywhere; falling back to flat weights")
        w = np.ones(S)
        flat = True
    return WeightedPosterior(thetas, w, float(eps), flat)


# -- rejection ABC reference -------------------------------------------------


def _reference_chunk(spec, rng: RngStream, size):
    thetas = spec.sample_prior(rng.child(0), size)
    summaries = spec.simulate_batch(thetas, rng.child(1))
    delta = spec.discrepancy(summaries)
    bad = ~np.isfinite(delta)
    if np.any(bad):
        log.warning("%d reference simulations failed and were skipped", int(bad.sum()))
        delta = np.where(bad, np.inf, delta)
    return thetas, delta


def _remote_chunk(name, options, seed, stream_id, path, size):
    spec = get_simulator(name, **options)
    return _reference_chunk(spec, RngStream(seed, stream_id, path), size)


def rejection_abc_reference(spec: SimulatorSpec, budget, keep, rng: RngStream, chunk=100_000,
                            workers=1):
    """Simulate ``budget`` prior draws and return the ``round(budget * keep)`` closest ones.

    Draws are split into chunks with their own child streams, so the result
    does not depend on ``workers``.
    """
    if budget < 1000:
        raise DomainError("the reference needs a budget of at least 1000 draws")
    if not 0 < keep <= 1:
        raise DomainError("keep fraction must lie in (0, 1]")
    sizes = [min(chunk, budget - s) for s in range(0, budget, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [
                pool.submit(_remote_chunk, spec.name, spec.options, rng.seed, rng.stream_id,
                            rng.child(i)._path, n)
                for i, n in enumerate(sizes)
            ]
            parts = [f.result() for f in futures]
    else:
        parts = [_reference_chunk(spec, rng.child(i), n) for i, n in enumerate(sizes)]
    thetas = np.concatenate([p[0] for p in parts])
    delta = np.concatenate([p[1] for p in parts])
    k = int(round(budget * keep))
    order = np.lexsort((np.arange(delta.size), delta))[:k]
    return thetas[order]


class ReferenceCache:
    """Reference samples on disk, indexed by a JSON manifest with checksums."""

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self.manifest_path = os.path.join(root, "manifest.json")

    def _manifest(self):
        if not os.path.exists(self.manifest_path):
            return {}
        with open(self.manifest_path) as fh:
            return json.load(fh)

    @staticmethod
    def key(name, budget, keep, seed, options=None):
        opts = json.dumps(options or {}, sort_keys=True)
        return f"{name}|{budget}|{keep!r}|{seed}|{opts}"

    def get(self, spec: SimulatorSpec, budget, keep, seed, workers=1):
        key = self.key(spec.name, budget, keep, seed, spec.options)
        manifest = self._manifest()
        entry = manifest.get(key)
        if entry is not None:
            path = os.path.join(self.root, entry["file"])
            if os.path.exists(path):
                data = np.load(path)
                if _checksum(data) == entry["sha256"]:
                    return data
                log.warning("reference cache entry %s is corrupt; rebuilding", key)
        data = rejection_abc_reference(spec, budget, keep, RngStream(seed, 7), workers=workers)
        fname = hashlib.sha256(key.encode()).hexdigest()[:16] + ".npy"
        np.save(os.path.join(self.root, fname), data)
        manifest[key] = {"simulator": spec.name, "budget": budget, "keep": keep, "seed": seed,
                         "options": spec.options, "file": fname, "sha256": _checksum(data)}
        tmp = self.manifest_path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.manifest_path)
        return data


def _checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=float).tobytes()).hexdigest()


def posterior_distance(posterior: WeightedPosterior, reference,
                       config: SinkhornConfig = SinkhornConfig()) -> SinkhornResult:
    """Sinkhorn divergence after scaling both sets by the reference's per-dimension std."""
    reference = np.atleast_2d(reference)
    scale = reference.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return sinkhorn_divergence(posterior.samples / scale, reference / scale, config,
                               a=posterior.weights)
