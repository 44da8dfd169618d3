"""Comparison tables: scaled distances with bootstrap intervals of the mean."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InsufficientDataError
from ..mathcore import RngStream
from ..transport import scaled_wasserstein

COMPARISON_COLUMNS = ("simulator", "surrogate", "runs", "raw_median", "scaled_median",
                      "ci_low", "ci_high", "interval")


@dataclass(frozen=True)
class ComparisonRow:
    simulator: str
    surrogate: str
    runs: int
    raw_median: float
    scaled_median: float
    ci_low: float
    ci_high: float

    @property
    def interval(self):
        return f"({self.ci_low:.3g}, {self.ci_high:.3g})"

    def row(self):
        return [self.simulator, self.surrogate, str(self.runs), repr(float(self.raw_median)),
                repr(float(self.scaled_median)), repr(self.ci_low), repr(self.ci_high), self.interval]


def bootstrap_mean_ci(values, resamples, rng: RngStream, level=0.95):
    """Percentile bootstrap interval of the mean."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise InsufficientDataError("no values to bootstrap")
    idx = rng.generator.integers(0, v.size, size=(resamples, v.size))
    means = v[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(means, alpha)), float(np.quantile(means, 1.0 - alpha))


def compare_models(records, resamples=10_000, seed=0):
    """One row per (simulator, surrogate).

    Each run's raw distance is divided by the smallest per-surrogate median on
    the same simulator; rows report the median and a bootstrap CI of the mean
    of those scaled values.
    """
    ok = [r for r in records if r.ok]
    sims = sorted({r.simulator for r in ok})
    rows = []
    for sim in sims:
        refs = {r.reference for r in ok if r.simulator == sim}
        if len(refs) > 1:
            raise ConfigError(f"{sim}: runs were scored against different references")
        by = {}
        for r in ok:
            if r.simulator == sim:
                by.setdefault(r.surrogate, []).append(r.raw_distance)
        if len(by) < 2:
            raise ConfigError(f"{sim}: need at least two surrogates to compare")
        medians = {k: float(np.median(v)) for k, v in by.items()}
        scaled = scaled_wasserstein(medians)
        low = min(medians.values())
        for i, kind in enumerate(sorted(by)):
            vals = np.array(by[kind]) / low
            lo, hi = bootstrap_mean_ci(vals, resamples, RngStream(seed, 11).child(i))
            rows.append(ComparisonRow(sim, kind, len(vals), medians[kind], scaled[kind], lo, hi))
    return rows


def write_comparison(path, rows, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow(r.row())
