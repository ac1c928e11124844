"""Noise-level estimation and the choice of the repetition count."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import DEFAULT_N_CAP, MeasurementStream, NoiseModel, RepetitionCapError


@dataclass(frozen=True)
class NoiseEstimate:
    """Mean per-channel sample variance ``s_squared`` and ``delta_est = sqrt(m s^2 / n)``."""

    s_squared: float
    delta_est: float
    m: int
    n: int


def sample_variance(stream: MeasurementStream) -> float:
    """``(1/m) sum_j m2_j / (n-1)``."""
    if stream.n < 2:
        raise ValueError(f"sample variance needs n >= 2, stream has n={stream.n}")
    return float(np.sum(stream.m2) / (stream.m * (stream.n - 1)))


def noise_level_estimate(stream: MeasurementStream) -> NoiseEstimate:
    s2 = sample_variance(stream)
    return NoiseEstimate(s2, math.sqrt(stream.m * s2 / stream.n), stream.m, stream.n)


def choose_repetitions(stream: MeasurementStream, model: NoiseModel, delta_disc: float,
                       c_lower: float, n_cap: int | None = None) -> int:
    """Smallest ``n >= 2`` with ``m s^2_{m,n} / (n c^2) <= delta^2``.

    Rounds are added one at a time in effect: each generated block is scanned
    with prefix sums and only the rows up to the first admissible ``n`` are
    ingested.  The rest go back into the stream's buffer.
    """
    if not delta_disc > 0:
        raise ValueError("delta_disc must be positive")
    if not c_lower > 0:
        raise ValueError("c_lower must be positive")
    cap = min(stream.n_cap, DEFAULT_N_CAP if n_cap is None else int(n_cap))
    c2 = c_lower * c_lower
    d2 = delta_disc * delta_disc

    while stream.n < 2:
        if stream.n + 1 > cap:
            raise RepetitionCapError("repetition cap reached before n = 2", n=stream.n)
        stream.ingest(stream.draw(model, 1))
    # m s^2 / (n c^2) with s^2 = sum(m2) / (m (n-1))
    if float(stream.m2.sum()) / ((stream.n - 1) * stream.n * c2) <= d2:
        return stream.n

    block = 64
    while True:
        room = cap - stream.n
        if room <= 0:
            raise RepetitionCapError(
                f"repetition cap {cap} reached before the rule held",
                n=stream.n, s_squared=sample_variance(stream))
        b = min(block, room, stream.block_rounds)
        rows = stream.draw(model, b)
        n0 = stream.n
        dev = rows - stream.mean
        s1 = np.cumsum(dev, axis=0)
        s2 = np.cumsum(np.einsum("ij,ij->i", dev, dev))
        counts = np.arange(1, b + 1, dtype=float)
        n_tot = n0 + counts
        m2_tot = _merged_m2(float(stream.m2.sum()), n0, s1, s2, counts)
        ok = m2_tot / ((n_tot - 1) * n_tot * c2) <= d2
        hit = np.flatnonzero(ok)
        if hit.size:
            j = int(hit[0]) + 1
            stream.ingest(rows[:j])
            stream.push_back(rows[j:])
            return stream.n
        stream.ingest(rows)
        block = min(block * 2, 1 << 22)


def _merged_m2(m2_0: float, n0: int, s1: np.ndarray, s2: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Total centred second moment after appending each prefix of a block.

    ``s1`` and ``s2`` hold prefix sums of ``x - mu0`` and ``|x - mu0|^2`` where
    ``mu0`` is the current mean.  Appending ``c`` rows with shifted sum ``S1``
    and shifted square sum ``S2`` changes the centred moment by
    ``S2 - |S1|^2 / (n0 + c)``.
    """
    return m2_0 + s2 - np.einsum("ij,ij->i", s1, s1) / (n0 + counts)


def apriori_repetitions(m: int, delta_disc: float, c_lower: float) -> int:
    """``ceil(m / (c^2 delta^2))``."""
    if m < 1 or not delta_disc > 0 or not c_lower > 0:
        raise ValueError("apriori_repetitions needs positive inputs")
    x = m / (c_lower**2 * delta_disc**2)
    # 100 / 0.1**2 evaluates to 10000.000000000002; do not round that up
    return max(1, math.ceil(x * (1 - 1e-12)))


def apriori_alpha(delta: float) -> float:
    """The identity rule ``alpha(delta) = delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return float(delta)
