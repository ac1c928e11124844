"""Spectral filter families ``F_alpha`` and their application through an SVD.

A filter defines the regulariser ``R_alpha = F_alpha(A^T A) A^T``.  In the
singular basis of ``A`` this reads

    R_alpha y = sum_j F_alpha(s_j^2) s_j (y, u_j) v_j.

Three families are provided.  All are indexed by a positive ``alpha`` so they
share the geometric grid ``alpha = q^k`` used by the discrepancy principle;
Landweber maps ``alpha`` to ``ceil(1/alpha)`` iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linop import SvdTriple

TIKHONOV = "tikhonov"
SPECTRAL_CUTOFF = "spectral_cutoff"
LANDWEBER = "landweber"
FAMILIES = (TIKHONOV, SPECTRAL_CUTOFF, LANDWEBER)

_ALIASES = {
    "tikhonov": TIKHONOV,
    "tik": TIKHONOV,
    "cutoff": SPECTRAL_CUTOFF,
    "spectral_cutoff": SPECTRAL_CUTOFF,
    "tsvd": SPECTRAL_CUTOFF,
    "landweber": LANDWEBER,
}


@dataclass(frozen=True)
class FilterSpec:
    """A filter family together with its constants.

    ``c0``, ``c_r`` and ``c_f`` bound ``|1 - F(l) l|``, ``l |F(l)|`` and
    ``alpha |F(l)|`` respectively; ``qualification`` is the largest smoothness
    index the filter can exploit (``math.inf`` for unlimited).
    ``landweber_step`` is the relaxation ``omega``; ``None`` means
    ``1 / s_max^2`` of whichever operator the filter is applied to.
    """

    family: str
    c0: float = 1.0
    c_r: float = 1.0
    c_f: float = 1.0
    qualification: float = math.inf
    landweber_step: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown filter family {self.family!r}")
        if self.landweber_step is not None and self.landweber_step <= 0:
            raise ValueError("landweber_step must be positive")

    def with_step(self, omega: float) -> "FilterSpec":
        # |F| <= omega * ceil(1/alpha) <= 2 omega / alpha on the grid alpha <= 1
        return replace(self, landweber_step=float(omega), c_f=2.0 * float(omega))

    def resolved(self, svd: SvdTriple) -> "FilterSpec":
        """Fix a default Landweber step from the operator's largest singular value."""
        if self.family != LANDWEBER or self.landweber_step is not None:
            return self
        if svd.s.size == 0:
            return self.with_step(1.0)
        return self.with_step(1.0 / float(svd.s[0]) ** 2)


def tikhonov() -> FilterSpec:
    return FilterSpec(TIKHONOV, c0=1.0, c_r=1.0, c_f=1.0, qualification=2.0)


def spectral_cutoff() -> FilterSpec:
    return FilterSpec(SPECTRAL_CUTOFF, c0=1.0, c_r=1.0, c_f=1.0, qualification=math.inf)


def landweber(step: float | None = None) -> FilterSpec:
    spec = FilterSpec(LANDWEBER, c0=1.0, c_r=1.0, c_f=2.0, qualification=math.inf)
    return spec if step is None else spec.with_step(step)


def make_filter(name: str, step: float | None = None) -> FilterSpec:
    try:
        family = _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {sorted(_ALIASES)}") from None
    if family == TIKHONOV:
        return tikhonov()
    if family == SPECTRAL_CUTOFF:
        return spectral_cutoff()
    return landweber(step)


def landweber_iterations(alpha: float) -> int:
    # 1/q^k is not exact in floating point; keep k = 1/alpha when it is integral
    return max(1, math.ceil(1.0 / alpha - 1e-9))


def filter_value(spec: FilterSpec, alpha: float, lam):
    """Evaluate ``F_alpha(lam)``; ``lam`` may be a scalar or an array."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise ValueError("lambda must be positive")
    out = _filter(spec, alpha, lam_arr)
    return float(out) if np.ndim(lam) == 0 else out


def _filter(spec: FilterSpec, alpha: float, lam: np.ndarray) -> np.ndarray:
    if spec.family == TIKHONOV:
        return 1.0 / (lam + alpha)
    if spec.family == SPECTRAL_CUTOFF:
        return np.where(lam >= alpha, 1.0 / lam, 0.0)
    omega = spec.landweber_step
    if omega is None:
        raise ValueError("Landweber filter needs a step; call FilterSpec.resolved(svd) first")
    k = landweber_iterations(alpha)
    x = omega * lam
    with np.errstate(invalid="ignore", divide="ignore"):
        # -expm1(k log1p(-x)) = 1 - (1-x)^k without cancellation for small x
        stable = -np.expm1(k * np.log1p(-x))
    direct = 1.0 - (1.0 - x) ** k
    return np.where(x < 1.0, stable, direct) / lam


def _residual_factor(spec: FilterSpec, alpha, lam: np.ndarray) -> np.ndarray:
    """``1 - F_alpha(lam) lam`` in a form free of cancellation."""
    if spec.family == TIKHONOV:
        return alpha / (lam + alpha)
    if spec.family == SPECTRAL_CUTOFF:
        return np.where(lam >= alpha, 0.0, 1.0)
    k = landweber_iterations(alpha)
    return (1.0 - spec.landweber_step * lam) ** k


def spectral_coefficients(svd: SvdTriple, data) -> tuple[np.ndarray, float]:
    """Return ``U^T data`` and the squared norm of the out-of-range part."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 1 or data.shape[0] != svd.rows:
        raise ValueError(f"data has shape {data.shape}, expected ({svd.rows},)")
    coef = svd.u.T @ data
    outside = data - svd.u @ coef
    return coef, float(outside @ outside)


def apply_regulariser(svd: SvdTriple, spec: FilterSpec, alpha: float, data) -> np.ndarray:
    spec = spec.resolved(svd)
    coef, _ = spectral_coefficients(svd, data)
    if svd.s.size == 0:
        return np.zeros(svd.cols)
    gain = _filter(spec, alpha, svd.s**2) * svd.s
    return svd.v @ (gain * coef)


def residual_norm(svd: SvdTriple, spec: FilterSpec, alpha: float, data) -> float:
    """``|| A R_alpha data - data ||`` evaluated in the singular basis."""
    spec = spec.resolved(svd)
    coef, outside_sq = spectral_coefficients(svd, data)
    return float(residual_path(svd, spec, np.array([alpha]), coef, outside_sq)[0])


def residual_path(svd: SvdTriple, spec: FilterSpec, alphas, coef, outside_sq: float) -> np.ndarray:
    """Residual norms for every ``alpha`` in ``alphas`` from precomputed coefficients."""
    spec = spec.resolved(svd)
    alphas = np.asarray(alphas, dtype=float)
    lam = svd.s**2
    if lam.size == 0:
        return np.full(alphas.shape, math.sqrt(outside_sq))
    c2 = np.asarray(coef) ** 2
    if spec.family == LANDWEBER:
        # the iteration count depends on alpha through a ceil, evaluate row by row
        r = np.stack([_residual_factor(spec, float(a), lam) for a in alphas])
    else:
        r = _residual_factor(spec, alphas[:, None], lam[None, :])
    return np.sqrt((r * r) @ c2 + outside_sq)


def operator_norm_bound(svd: SvdTriple, spec: FilterSpec, alpha: float) -> float:
    """``||R_alpha|| = max_j |F_alpha(s_j^2)| s_j``."""
    spec = spec.resolved(svd)
    if svd.s.size == 0:
        return 0.0
    return float(np.max(np.abs(_filter(spec, alpha, svd.s**2)) * svd.s))


def qualification_check(spec: FilterSpec, nu: float, alpha_grid, lambda_grid) -> float:
    """Empirical ``C_nu = sup lam^(nu/2) |1 - F_alpha(lam) lam| / alpha^(nu/2)``."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if nu > spec.qualification:
        raise ValueError(f"nu={nu} exceeds the qualification {spec.qualification} of {spec.family}")
    lam = np.asarray(lambda_grid, dtype=float)
    if spec.family == LANDWEBER and spec.landweber_step is None:
        spec = spec.with_step(1.0 / float(lam.max()))
    worst = 0.0
    for a in np.asarray(alpha_grid, dtype=float):
        r = np.abs(_residual_factor(spec, float(a), lam))
        worst = max(worst, float(np.max(lam ** (nu / 2) * r) / a ** (nu / 2)))
    return worst
