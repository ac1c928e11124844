"""Zero-mean noise laws and the repeated-measurement stream.

Every sampler consumes exactly one double from the generator per draw
(inverse-CDF construction), so a stream's realisation depends only on its
seed key and never on how the rounds were chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

GAUSSIAN = "gaussian"
SHIFTED_GPD = "shifted_gpd"
HEAVY_TAIL_FEPS = "heavy_tail_feps"
TWO_POINT = "two_point_degenerate"
CUSTOM = "custom_sampler"

#: Default maximum number of repetitions a stream may hold.
DEFAULT_N_CAP = 10**8
#: Rounds above which the optional normal approximation kicks in.
LARGE_N_THRESHOLD = 10**7
#: Target number of doubles per generated block.
_BLOCK_ELEMENTS = 1 << 20


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    std: float = 0.0
    shape: float = 0.0
    scale: float = 0.0
    eps: float = 0.0
    index: int = 0
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = field(default=None, compare=False)
    custom_variance: float | None = None

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if self.std < 0:
                raise ValueError("gaussian std must be non-negative")
        elif self.kind == SHIFTED_GPD:
            if not self.shape < 0.5:
                raise ValueError("shifted GPD needs shape < 1/2 for a finite variance")
            if self.shape == 0 or self.scale <= 0:
                raise ValueError("shifted GPD needs non-zero shape and positive scale")
        elif self.kind == HEAVY_TAIL_FEPS:
            if not 0 < self.eps < 1:
                raise ValueError("heavy-tail parameter eps must lie in (0, 1)")
        elif self.kind == TWO_POINT:
            if self.index < 2:
                raise ValueError("two-point law needs index m >= 2")
        elif self.kind == CUSTOM:
            if self.sampler is None:
                raise ValueError("custom noise needs a sampler")
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @property
    def variance(self) -> float:
        if self.kind == GAUSSIAN:
            return self.std**2
        if self.kind == SHIFTED_GPD:
            l = self.shape
            return self.scale**2 / ((1 - l) ** 2 * (1 - 2 * l))
        if self.kind in (HEAVY_TAIL_FEPS, TWO_POINT):
            return 1.0
        if self.custom_variance is None:
            raise ValueError("custom noise model has no declared variance")
        return self.custom_variance

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == GAUSSIAN:
            d["std"] = self.std
        elif self.kind == SHIFTED_GPD:
            d.update(shape=self.shape, scale=self.scale)
        elif self.kind == HEAVY_TAIL_FEPS:
            d["eps"] = self.eps
        elif self.kind == TWO_POINT:
            d["index"] = self.index
        return d


def gaussian(std: float) -> NoiseModel:
    return NoiseModel(GAUSSIAN, std=float(std))


def shifted_gpd(shape: float, scale: float) -> NoiseModel:
    return NoiseModel(SHIFTED_GPD, shape=float(shape), scale=float(scale))


def gpd_for_variance(variance: float, shape: float = 1.0 / 3.0) -> NoiseModel:
    """Shifted GPD with the given variance; ``scale = sqrt((1-l)^2 (1-2l) variance)``."""
    scale = math.sqrt((1 - shape) ** 2 * (1 - 2 * shape) * variance)
    return shifted_gpd(shape, scale)


def heavy_tail(eps: float) -> NoiseModel:
    return NoiseModel(HEAVY_TAIL_FEPS, eps=float(eps))


def two_point(index: int) -> NoiseModel:
    return NoiseModel(TWO_POINT, index=int(index))


def custom(sampler, variance: float | None = None) -> NoiseModel:
    return NoiseModel(CUSTOM, sampler=sampler, custom_variance=variance)


def feps_constants(eps: float) -> tuple[float, float]:
    """Return ``(c_eps, b_eps)`` of the symmetric power-law density."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    c = eps ** (1 + eps / 2) / (2 * (2 + eps) ** (eps / 2))
    b = math.sqrt(eps / (2 + eps))
    return c, b


def feps_density(eps: float, x):
    """``c_eps / |x|^(3+eps)`` for ``|x| >= b_eps``, zero inside the gap."""
    c, b = feps_constants(eps)
    ax = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        out = np.where(ax >= b, c / np.maximum(ax, b) ** (3 + eps), 0.0)
    return float(out) if np.ndim(x) == 0 else out


def feps_tail(eps: float, x):
    """``P(|X| >= x)`` for ``x >= b_eps``."""
    c, _ = feps_constants(eps)
    return 2 * c / ((2 + eps) * np.asarray(x, dtype=float) ** (2 + eps))


def two_point_support(index: int) -> tuple[tuple[float, float], tuple[float, float]]:
    """``((low, p_low), (high, p_high))`` of the degenerate two-point law."""
    m4 = float(index) ** 4
    r = math.sqrt(m4 - 1)
    return (-r, 1 / m4), (1 / r, (m4 - 1) / m4)


def sample(model: NoiseModel, rng: np.random.Generator, count) -> np.ndarray:
    """Draw ``count`` i.i.d. values (``count`` may be a shape tuple)."""
    shape = (count,) if np.isscalar(count) else tuple(count)
    if int(np.prod(shape)) < 1:
        raise ValueError("count must be at least 1")
    kind = model.kind
    if kind == GAUSSIAN:
        return model.std * rng.standard_normal(shape)
    if kind == CUSTOM:
        return np.asarray(model.sampler(rng, int(np.prod(shape))), dtype=float).reshape(shape)
    u = rng.random(shape)
    if kind == SHIFTED_GPD:
        l, s = model.shape, model.scale
        # 1-u lies in (0, 1]
        return s * ((1.0 - u) ** (-l) - 1.0) / l - s / (1.0 - l)
    if kind == HEAVY_TAIL_FEPS:
        _, b = feps_constants(model.eps)
        neg = u < 0.5
        v = np.where(neg, 1.0 - 2.0 * u, 2.0 - 2.0 * u)
        mag = b * v ** (-1.0 / (2.0 + model.eps))
        return np.where(neg, -mag, mag)
    (low, p_low), (high, _) = two_point_support(model.index)
    return np.where(u < p_low, low, high)


class RepetitionCapError(RuntimeError):
    """The stream would exceed its repetition cap."""

    def __init__(self, message, n=None, s_squared=None):
        super().__init__(message)
        self.n = n
        self.s_squared = s_squared


class MeasurementStream:
    """Per-channel running mean and centred second moment of repeated measurements.

    Rows ``Y_i = truth + noise_i`` are drawn from a dedicated generator.  Rows
    drawn but not yet ingested are kept in a buffer, so peeking ahead never
    changes which values later rounds see.
    """

    def __init__(self, truth, rng: np.random.Generator, *, n_cap: int = DEFAULT_N_CAP,
                 large_n_approx: bool = False):
        truth = np.asarray(truth, dtype=float)
        if truth.ndim != 1 or truth.size < 1:
            raise ValueError("truth must be a non-empty vector")
        self.truth = truth
        self.m = truth.size
        self.n = 0
        self.mean = np.zeros(self.m)
        self.m2 = np.zeros(self.m)
        self.rng = rng
        self.n_cap = int(n_cap)
        self.large_n_approx = large_n_approx
        self.approximated = False
        self._pending = np.empty((0, self.m))

    def __repr__(self):
        return f"MeasurementStream(m={self.m}, n={self.n})"

    def draw(self, model: NoiseModel, rounds: int) -> np.ndarray:
        """Return the next ``rounds`` rows without ingesting them."""
        take = min(rounds, self._pending.shape[0])
        head, self._pending = self._pending[:take], self._pending[take:]
        if take == rounds:
            return head
        fresh = self.truth + sample(model, self.rng, (rounds - take, self.m))
        return np.concatenate([head, fresh]) if take else fresh

    def push_back(self, rows: np.ndarray) -> None:
        """Return unused rows to the front of the buffer."""
        if rows.shape[0]:
            self._pending = np.concatenate([rows, self._pending])

    def ingest(self, rows) -> None:
        """Merge a block of rows into the running moments (pairwise update)."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.m:
            raise ValueError(f"rows must have shape (b, {self.m})")
        b = rows.shape[0]
        if b == 0:
            return
        if self.n + b > self.n_cap:
            raise RepetitionCapError(f"repetition cap {self.n_cap} exceeded", n=self.n)
        bmean = rows.mean(axis=0)
        dev = rows - bmean
        bm2 = np.einsum("ij,ij->j", dev, dev)
        self._merge(b, bmean, bm2)

    def _merge(self, b: int, bmean: np.ndarray, bm2: np.ndarray) -> None:
        n = self.n + b
        delta = bmean - self.mean
        self.mean = self.mean + delta * (b / n)
        self.m2 = self.m2 + bm2 + delta * delta * (self.n * b / n)
        self.n = n

    def ingest_approximate(self, model: NoiseModel, rounds: int) -> None:
        """Normal approximation of ``rounds`` further rows using the model's true variance."""
        if self.n + rounds > self.n_cap:
            raise RepetitionCapError(f"repetition cap {self.n_cap} exceeded", n=self.n)
        var = model.variance
        bmean = self.truth + math.sqrt(var / rounds) * self.rng.standard_normal(self.m)
        dof = rounds - 1
        bm2 = var * np.maximum(dof + math.sqrt(2.0 * dof) * self.rng.standard_normal(self.m), 0.0)
        self._merge(rounds, bmean, bm2)
        self.approximated = True

    @property
    def block_rounds(self) -> int:
        return max(1, _BLOCK_ELEMENTS // self.m)


def new_stream(truth, seed: int, *key: int, **kwargs) -> MeasurementStream:
    return MeasurementStream(truth, make_rng(seed, *key), **kwargs)


def simulate_rounds(stream: MeasurementStream, model: NoiseModel, rounds: int) -> MeasurementStream:
    """Ingest ``rounds`` new measurement rows into ``stream``."""
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    if stream.n + rounds > stream.n_cap:
        raise RepetitionCapError(
            f"{stream.n} + {rounds} rounds exceed the repetition cap {stream.n_cap}", n=stream.n)
    if stream.large_n_approx and rounds > LARGE_N_THRESHOLD:
        stream.ingest_approximate(model, rounds)
        return stream
    left = rounds
    while left:
        b = min(left, stream.block_rounds)
        stream.ingest(stream.draw(model, b))
        left -= b
    return stream


def simulate_to(stream: MeasurementStream, model: NoiseModel, n: int) -> MeasurementStream:
    """Grow ``stream`` to exactly ``n`` rounds."""
    if n < stream.n:
        raise ValueError(f"stream already holds {stream.n} > {n} rounds")
    return simulate_rounds(stream, model, n - stream.n)
