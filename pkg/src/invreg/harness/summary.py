"""Box-plot statistics per experiment group."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .experiments import RunRecord

GroupKey = tuple[str, str, str, int, float]


@dataclass(frozen=True)
class BoxStats:
    """Quartiles (linear interpolation) and 1.5 IQR whiskers clamped to the data.

    Only terminated runs enter the statistics; ``excluded`` counts the rest.
    """

    experiment: str
    problem: str
    scheme: str
    m: int
    n_or_delta: float
    count: int
    excluded: int
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: int
    mean: float
    mean_square: float

    @property
    def key(self) -> GroupKey:
        return (self.experiment, self.problem, self.scheme, self.m, self.n_or_delta)

    def to_dict(self) -> dict:
        return asdict(self)


def box_stats(values) -> dict:
    """Five-number summary of a non-empty sample."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cannot summarise an empty group")
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {
        "median": float(med), "q1": float(q1), "q3": float(q3),
        "whisker_lo": float(inside.min()), "whisker_hi": float(inside.max()),
        "outliers": int(v.size - inside.size),
        "mean": float(v.mean()), "mean_square": float(np.mean(v * v)),
    }


def group_key(r: RunRecord) -> GroupKey:
    return (r.experiment, r.problem, r.scheme, r.m, float(r.n_or_delta))


def summarize(records: Iterable[RunRecord]) -> list[BoxStats]:
    """One ``BoxStats`` per group, in order of first appearance.

    A group whose runs all failed to terminate has no statistics and is an error.
    """
    groups: dict[GroupKey, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(group_key(r), []).append(r)
    out = []
    for key, recs in groups.items():
        good = [r.relative_error for r in recs if r.terminated]
        if not good:
            raise ValueError(f"group {key} has no terminated runs")
        out.append(BoxStats(*key, count=len(good), excluded=len(recs) - len(good), **box_stats(good)))
    return out


def lookup(stats: Iterable[BoxStats], experiment: str, m: int, n_or_delta: float | None = None) -> BoxStats:
    for s in stats:
        if s.experiment == experiment and s.m == m and (n_or_delta is None or s.n_or_delta == float(n_or_delta)):
            return s
    raise KeyError((experiment, m, n_or_delta))
