"""The two discrepancy-principle pipelines.

fdr
    Regularise the discretised operator ``P_m K`` directly against the
    averaged channel data and stop at the first grid point ``alpha = q^k``
    whose residual in ``R^m`` falls below ``tau * delta_est``.
idr
    Pick the repetition count from a known bound on the discretisation error,
    back-project the averaged data with ``P_m^+`` and regularise ``K`` itself;
    the residual is measured in the ambient space against ``2 tau delta``.

A priori variants replace the residual test by ``alpha = delta``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import estimate, filters
from .discretise import Discretisation
from .filters import FilterSpec
from .linop import DenseOperator, pseudo_inverse_apply
from .noise import MeasurementStream, NoiseModel, RepetitionCapError, simulate_to

TAU_TIMES_ESTIMATE = "tau_times_estimate"
FIXED_KAPPA = "fixed_kappa"
THRESHOLD_RULES = (TAU_TIMES_ESTIMATE, FIXED_KAPPA)


@dataclass(frozen=True)
class DiscrepancyConfig:
    tau: float = 1.2
    q: float = 0.7
    k_max: int = 200
    threshold_rule: str = TAU_TIMES_ESTIMATE

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if self.k_max < 0:
            raise ValueError("k_max must be non-negative")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ValueError(f"unknown threshold rule {self.threshold_rule!r}")

    def check_filter(self, spec: FilterSpec) -> None:
        if not self.tau > spec.c0:
            raise ValueError(f"tau={self.tau} must exceed C_0={spec.c0} of the {spec.family} filter")

    def alphas(self) -> np.ndarray:
        return self.q ** np.arange(self.k_max + 1, dtype=float)


@dataclass(frozen=True)
class RegularisedSolution:
    """Reconstruction and the bookkeeping of how its parameter was chosen.

    ``k`` is the grid index (``alpha = q^k``) for discrepancy runs and
    ``None`` for a priori runs.  ``delta_used`` is the noise level entering
    the threshold, ``threshold`` the value the residual was compared with.
    """

    x: np.ndarray
    alpha: float
    k: int | None
    n_used: int
    delta_used: float
    residual: float
    terminated: bool
    threshold: float = math.nan
    repetitions_capped: bool = False


_COMPOSITE_LOCK = threading.Lock()
_COMPOSITES: dict[tuple[int, int], tuple[DenseOperator, DenseOperator, DenseOperator]] = {}
_COMPOSITE_LIMIT = 256


def composite(K: DenseOperator, d: Discretisation) -> DenseOperator:
    """``P_m K``, built once per ``(K, d)`` pair so its SVD is shared across runs."""
    key = (id(K), id(d.op))
    with _COMPOSITE_LOCK:
        hit = _COMPOSITES.get(key)
        # the stored references keep the ids from being recycled
        if hit is not None and hit[0] is K and hit[1] is d.op:
            return hit[2]
        if d.m_inf != K.rows:
            raise ValueError(f"discretisation acts on R^{d.m_inf}, K maps into R^{K.rows}")
        pk = DenseOperator(d.op.entries @ K.entries, name="PK")
        if len(_COMPOSITES) >= _COMPOSITE_LIMIT:
            _COMPOSITES.pop(next(iter(_COMPOSITES)))
        _COMPOSITES[key] = (K, d.op, pk)
        return pk


def _vector(v, size: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != size:
        raise ValueError(f"{what} has shape {v.shape}, expected ({size},)")
    return v


def fdr_solve(K: DenseOperator, d: Discretisation, mean_vec, spec: FilterSpec, alpha: float) -> np.ndarray:
    """``R_alpha^{(m)} mean_vec`` for the composite operator ``P_m K``."""
    pk = composite(K, d)
    y = _vector(mean_vec, d.m, "mean vector")
    return filters.apply_regulariser(pk.svd(), spec, alpha, y)


def idr_backproject(d: Discretisation, mean_vec) -> np.ndarray:
    """Minimal-norm ``z`` with ``P_m z = mean_vec``."""
    y = _vector(mean_vec, d.m, "mean vector")
    return pseudo_inverse_apply(d.op, y)


def idr_solve(K: DenseOperator, z, spec: FilterSpec, alpha: float) -> np.ndarray:
    z = _vector(z, K.rows, "back-projected data")
    return filters.apply_regulariser(K.svd(), spec, alpha, z)


def discrepancy_search(op: DenseOperator, spec: FilterSpec, data, threshold: float,
                       cfg: DiscrepancyConfig) -> tuple[int, float, float, bool]:
    """First ``k`` with ``||op R_{q^k} data - data|| <= threshold``.

    Returns ``(k, alpha, residual, terminated)``; when no grid point passes,
    the last one is returned with ``terminated = False``.
    """
    t = op.svd()
    spec = spec.resolved(t)
    coef, outside_sq = filters.spectral_coefficients(t, data)
    alphas = cfg.alphas()
    res = filters.residual_path(t, spec, alphas, coef, outside_sq)
    ok = np.flatnonzero(res <= threshold)
    k = int(ok[0]) if ok.size else cfg.k_max
    return k, float(alphas[k]), float(res[k]), bool(ok.size)


def fdr_threshold(cfg: DiscrepancyConfig, stream: MeasurementStream) -> tuple[float, float]:
    """Return ``(delta_used, threshold)`` for the active rule."""
    if cfg.threshold_rule == FIXED_KAPPA:
        if stream.n < 1:
            raise ValueError("fixed_kappa threshold needs n >= 1")
        kappa = math.sqrt((stream.m + math.sqrt(stream.m)) / stream.n)
        return kappa, kappa
    est = estimate.noise_level_estimate(stream)
    return est.delta_est, cfg.tau * est.delta_est


def fdr_discrepancy(K: DenseOperator, d: Discretisation, stream: MeasurementStream,
                    spec: FilterSpec, cfg: DiscrepancyConfig = DiscrepancyConfig()) -> RegularisedSolution:
    """Discrepancy principle on ``P_m K`` with the estimated noise level."""
    cfg.check_filter(spec)
    if stream.m != d.m:
        raise ValueError(f"stream has {stream.m} channels, discretisation has {d.m}")
    delta, threshold = fdr_threshold(cfg, stream)
    pk = composite(K, d)
    k, alpha, res, done = discrepancy_search(pk, spec, stream.mean, threshold, cfg)
    x = filters.apply_regulariser(pk.svd(), spec, alpha, stream.mean)
    return RegularisedSolution(x, alpha, k, stream.n, delta, res, done, threshold)


def idr_discrepancy(K: DenseOperator, d: Discretisation, stream: MeasurementStream, model: NoiseModel,
                    spec: FilterSpec, cfg: DiscrepancyConfig, delta_disc: float, c_lower: float,
                    n_cap: int | None = None) -> RegularisedSolution:
    """Choose ``n`` from ``delta_disc``, back-project, then discrepancy on ``K`` at ``2 tau delta``."""
    cfg.check_filter(spec)
    if not delta_disc > 0:
        raise ValueError("delta_disc must be positive")
    if stream.m != d.m:
        raise ValueError(f"stream has {stream.m} channels, discretisation has {d.m}")
    capped = False
    try:
        estimate.choose_repetitions(stream, model, delta_disc, c_lower, n_cap)
    except RepetitionCapError:
        capped = True
    threshold = 2.0 * cfg.tau * delta_disc
    z = idr_backproject(d, stream.mean)
    k, alpha, res, done = discrepancy_search(K, spec, z, threshold, cfg)
    x = filters.apply_regulariser(K.svd(), spec, alpha, z)
    return RegularisedSolution(x, alpha, k, stream.n, delta_disc, res, done and not capped,
                               threshold, repetitions_capped=capped)


def fdr_apriori(K: DenseOperator, d: Discretisation, stream: MeasurementStream,
                spec: FilterSpec) -> RegularisedSolution:
    """``alpha = delta = sqrt(m/n)``, i.e. the a priori rule with ``s^2`` fixed to 1."""
    if stream.n < 1:
        raise ValueError("a priori fdr needs n >= 1")
    delta = math.sqrt(stream.m / stream.n)
    alpha = estimate.apriori_alpha(delta)
    pk = composite(K, d)
    x = filters.apply_regulariser(pk.svd(), spec, alpha, stream.mean)
    res = float(np.linalg.norm(pk.entries @ x - stream.mean))
    return RegularisedSolution(x, alpha, None, stream.n, delta, res, True)


def idr_apriori(K: DenseOperator, d: Discretisation, stream: MeasurementStream, model: NoiseModel,
                spec: FilterSpec, delta_disc: float, c_lower: float) -> RegularisedSolution:
    """``n = ceil(m / (c^2 delta^2))`` rounds, ``alpha = delta``, regularise the back-projection."""
    n = estimate.apriori_repetitions(d.m, delta_disc, c_lower)
    simulate_to(stream, model, max(n, stream.n))
    alpha = estimate.apriori_alpha(delta_disc)
    z = idr_backproject(d, stream.mean)
    x = filters.apply_regulariser(K.svd(), spec, alpha, z)
    res = float(np.linalg.norm(K.entries @ x - z))
    return RegularisedSolution(x, alpha, None, stream.n, delta_disc, res, True)
