"""Seeded repetitions of the inference loop, scored against a cached reference."""

from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..bolfi import bolfi_run
from ..errors import LFIError
from ..mathcore import RngStream
from ..posterior import ReferenceCache, posterior_distance, weighted_posterior_samples
from ..simulators import get_simulator
from ..surrogates import make_surrogate
from .compare import compare_models, write_comparison
from .config import ExperimentConfig, parse_config
from .records import ResultRecord, write_records

log = logging.getLogger(__name__)

FULL_SCALE = "full scale: 1000 repetitions, 1e8-draw reference"


def header_lines(config: ExperimentConfig):
    ref = config.reference
    return [
        f"desk-scale results: repetitions={config.repetitions}, reference budget={ref.budget}, "
        f"keep={ref.keep} ({FULL_SCALE})",
        f"simulator={config.simulator}, n_init={config.n_init}, s_total={config.s_total}",
    ]


def reference_id(config: ExperimentConfig):
    key = ReferenceCache.key(config.simulator, config.reference.budget, config.reference.keep,
                             config.reference.seed, config.simulator_options)
    return hashlib.sha256(key.encode()).hexdigest()[:12]


def build_reference(config: ExperimentConfig):
    spec = get_simulator(config.simulator, **config.simulator_options)
    ref = config.reference
    cache = ReferenceCache(ref.cache_dir)
    return cache.get(spec, ref.budget, ref.keep, ref.seed, workers=config.workers)


def run_single(config_data: dict, kind: str, index: int, out_dir: str | None = None):
    """One repetition: returns ``(record, wall_seconds)``.

    Seeds are ``base_seed + index`` for every surrogate, so all surrogates see
    the same initial evidence in a given repetition.
    """
    config = parse_config(config_data)
    seed = config.base_seed + index
    ref_id = reference_id(config)
    start = time.perf_counter()
    try:
        spec = get_simulator(config.simulator, **config.simulator_options)
        reference = build_reference(config)
        surrogate = make_surrogate(kind, config.gp.build(), config.dgp_config(kind))
        log_path = None
        if out_dir is not None:
            os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
            log_path = os.path.join(out_dir, "logs", f"{kind}_{seed}.csv")
        result = bolfi_run(spec, surrogate, config.n_init, config.s_total, RngStream(seed, 0),
                           config.acquisition.build(), log_path=log_path)
        post = weighted_posterior_samples(result.surrogate, spec, config.posterior_samples,
                                          RngStream(seed, 1), eps=config.threshold,
                                          eps_q=config.acquisition.eps_q)
        dist = posterior_distance(post, reference, config.sinkhorn.build())
        if out_dir is not None:
            os.makedirs(os.path.join(out_dir, "posteriors"), exist_ok=True)
            post.to_csv(os.path.join(out_dir, "posteriors", f"{kind}_{seed}.csv"))
        record = ResultRecord(seed, config.simulator, kind, dist.value, post.ess, post.threshold,
                              result.simulator_calls, dist.converged, result.fallbacks,
                              post.flat_fallback, ref_id)
    except (LFIError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("run %s/%d failed: %s", kind, seed, exc)
        record = ResultRecord.failed(seed, config.simulator, kind, exc, ref_id)
    return record, time.perf_counter() - start


def run_experiment(config: ExperimentConfig, out_dir=None, workers=None):
    """Every surrogate x repetition; writes ``runs.csv``, ``comparison.csv`` (two or
    more surrogates), ``effective_config.yaml``, per-run posteriors and logs, and
    ``timings.csv`` (wall-clock, the only non-reproducible file besides ``logs/``).
    """
    out_dir = out_dir or config.output_dir
    workers = workers or config.workers
    if config.budget_sweep:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "effective_config.yaml"), "w") as fh:
            fh.write(config.effective_yaml())
        records = []
        for budget, sub in config.sweep_configs():
            records += run_experiment(sub, os.path.join(out_dir, f"budget_{budget}"), workers)
        return records
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.yaml"), "w") as fh:
        fh.write(config.effective_yaml())
    build_reference(config)  # build once up front; runs then read the cache
    data = config.effective()
    jobs = [(kind, i) for kind in config.surrogates for i in range(config.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(run_single, data, kind, i, out_dir) for kind, i in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_single(data, kind, i, out_dir) for kind, i in jobs]
    order = {k: j for j, k in enumerate(config.surrogates)}
    merged = sorted(results, key=lambda rt: (order[rt[0].surrogate], rt[0].seed))
    records = [r for r, _ in merged]
    write_records(os.path.join(out_dir, "runs.csv"), records, header_lines(config))
    with open(os.path.join(out_dir, "timings.csv"), "w") as fh:
        fh.write("surrogate,seed,wall_seconds\n")
        for r, t in merged:
            fh.write(f"{r.surrogate},{r.seed},{t:.3f}\n")
    if len(config.surrogates) > 1 and any(r.ok for r in records):
        rows = compare_models(records, config.bootstrap_resamples, config.base_seed)
        write_comparison(os.path.join(out_dir, "comparison.csv"), rows, header_lines(config))
    return records
