"""Per-run result records and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

RUN_COLUMNS = ("seed", "simulator", "surrogate", "raw_distance", "ess", "threshold",
               "simulator_calls", "converged", "fallbacks", "flat_weights", "reference", "status", "error")


@dataclass(frozen=True)
class ResultRecord:
    seed: int
    simulator: str
    surrogate: str
    raw_distance: float
    ess: float
    threshold: float
    simulator_calls: int
    converged: bool
    fallbacks: int = 0
    flat_weights: bool = False
    reference: str = ""
    status: str = "ok"
    error: str = ""

    @property
    def ok(self):
        return self.status == "ok" and math.isfinite(self.raw_distance)

    def row(self):
        d = asdict(self)
        out = []
        for name in RUN_COLUMNS:
            v = d[name]
            if isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_row(cls, row: dict):
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for name in RUN_COLUMNS:
            raw = row[name]
            kind = kinds[name]
            if kind in ("int", int):
                kw[name] = int(raw)
            elif kind in ("float", float):
                kw[name] = float(raw)
            elif kind in ("bool", bool):
                kw[name] = raw == "true"
            else:
                kw[name] = raw
        return cls(**kw)

    @classmethod
    def failed(cls, seed, simulator, surrogate, error, reference=""):
        return cls(seed, simulator, surrogate, float("nan"), float("nan"), float("nan"), 0, False,
                   reference=reference, status="failed", error=str(error).replace("\n", " ")[:200])


def write_records(path, records, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_records(path):
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return [ResultRecord.from_row(row) for row in csv.DictReader(lines)]
