"""Measurement-channel operators ``P_m`` and their bound metadata.

Every scheme maps the working grid ``R^{m_inf}`` to ``R^m``; row ``j`` holds
the representer of the ``j``-th channel.  Rows always have equal Euclidean
norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linop import DenseOperator, pseudo_inverse_apply

BOX = "box"
HAT = "hat"
SVD_CHANNELS = "svd_channels"
PATHOLOGICAL_ROTATION = "pathological_rotation"
SMOOTHNESS_DECAY = "smoothness_decay"
CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class Discretisation:
    op: DenseOperator
    scheme: str
    c_lower: float | None = None
    c_upper: float | None = None
    delta_disc: float | None = None

    @property
    def m(self) -> int:
        return self.op.rows

    @property
    def m_inf(self) -> int:
        return self.op.cols

    def apply(self, y) -> np.ndarray:
        return self.op.entries @ np.asarray(y, dtype=float)


def _check_rows(p: np.ndarray) -> None:
    norms = np.linalg.norm(p, axis=1)
    if not np.allclose(norms, norms[0], rtol=0, atol=1e-10 * max(1.0, norms[0])):
        raise ValueError("channel representers must have equal norms")


def box_channels(m_inf: int, m: int) -> Discretisation:
    """Block sums over ``k = m_inf/m`` consecutive grid points, scaled by ``1/sqrt(k)``."""
    if m < 1 or m_inf < 1 or m_inf % m:
        raise ValueError(f"box scheme needs m | m_inf, got m={m}, m_inf={m_inf}")
    k = m_inf // m
    p = np.kron(np.eye(m), np.full((1, k), 1.0 / math.sqrt(k)))
    return Discretisation(DenseOperator(p, name=f"box[{m}]"), BOX, 1.0, 1.0)


def hat_weights(k: int) -> np.ndarray:
    """The ``2k+1`` ramp weights ``a_1..a_{2k+1}`` of a discrete hat (peak 1 at ``a_{k+1}``)."""
    i = np.arange(1, 2 * k + 2)
    return np.where(i <= k + 1, (i - 1) / k, 1.0 - (i - k - 1) / k)


def hat_channels(m_inf: int, m: int) -> Discretisation:
    """Hat-function channels on ``m`` nodes spaced ``k = (m_inf-1)/(m-1)`` apart.

    Node ``i`` (0-based) sits at grid index ``i*k``.  Interior rows carry the
    full hat, the two boundary rows carry the half hat that fits in the grid.
    Each row is normalised to unit norm on its own.
    """
    if m < 2 or m_inf < 2 or (m_inf - 1) % (m - 1):
        raise ValueError(f"hat scheme needs (m-1) | (m_inf-1), got m={m}, m_inf={m_inf}")
    k = (m_inf - 1) // (m - 1)
    a = hat_weights(k)
    p = np.zeros((m, m_inf))
    right_half = a[k:]
    left_half = a[: k + 1]
    p[0, : k + 1] = right_half / np.linalg.norm(right_half)
    p[m - 1, m_inf - k - 1 :] = left_half / np.linalg.norm(left_half)
    full = a / np.linalg.norm(a)
    for i in range(1, m - 1):
        p[i, (i - 1) * k : (i + 1) * k + 1] = full
    return Discretisation(DenseOperator(p, name=f"hat[{m}]"), HAT)


def svd_channels(K: DenseOperator, m: int, slack=None) -> Discretisation:
    """Channels along the first ``m`` left singular vectors of ``K``.

    ``delta_disc`` defaults to ``log(m+1) * s_{m+1}(K)``; ``slack`` replaces the
    ``log(m+1)`` factor.
    """
    t = K.svd()
    if m < 1 or m > t.rank:
        raise ValueError(f"m={m} exceeds the numerical rank {t.rank} of K")
    f_m = math.log(m + 1) if slack is None else float(slack)
    s_next = float(t.s[m]) if m < t.s.size else 0.0
    p = t.u[:, :m].T
    return Discretisation(DenseOperator(p, name=f"svd[{m}]"), SVD_CHANNELS, 1.0, 1.0, f_m * s_next)


def pathological_rotation(m_inf: int, m: int) -> Discretisation:
    """Canonical channels except that the first one mixes ``e_1`` and ``e_{m+1}``.

    The null space always contains ``e_1 - e_{m+1}``, so ``e_1`` is never
    resolved better than ``1/sqrt(2)``.
    """
    if m < 1 or m + 1 > m_inf:
        raise ValueError("pathological rotation needs m + 1 <= m_inf")
    p = np.zeros((m, m_inf))
    p[0, 0] = p[0, m] = 1.0 / math.sqrt(2.0)
    for j in range(1, m):
        p[j, j] = 1.0
    return Discretisation(DenseOperator(p, name=f"rotation[{m}]"), PATHOLOGICAL_ROTATION, 1.0, 1.0)


def decay_index(m: int) -> int:
    """1-based index ``ceil(e^m)`` of the far coordinate mixed into the last channel."""
    return math.ceil(math.exp(m))


def smoothness_decay_channels(m: int, ambient: int) -> Discretisation:
    """Canonical channels whose last row is ``e^-m e_m + sqrt(1-e^-2m) e_{ceil(e^m)}``."""
    if m < 1:
        raise ValueError("m must be positive")
    far = decay_index(m)
    if ambient < far:
        raise ValueError(f"ambient dimension {ambient} < ceil(e^{m}) = {far}")
    p = np.zeros((m, ambient))
    for j in range(m - 1):
        p[j, j] = 1.0
    w = math.exp(-m)
    p[m - 1, m - 1] = w
    p[m - 1, far - 1] = math.sqrt(-math.expm1(-2 * m))
    return Discretisation(DenseOperator(p, name=f"decay[{m}]"), SMOOTHNESS_DECAY, 1.0, 1.0)


def custom(matrix, c_lower=None, c_upper=None, delta_disc=None) -> Discretisation:
    p = np.asarray(matrix, dtype=float)
    _check_rows(p)
    return Discretisation(DenseOperator(p, name="custom"), CUSTOM, c_lower, c_upper, delta_disc)


def make_scheme(name: str, m_inf: int, m: int, K: DenseOperator | None = None) -> Discretisation:
    name = name.lower()
    if name == BOX:
        return box_channels(m_inf, m)
    if name == HAT:
        return hat_channels(m_inf, m)
    if name in ("svd", SVD_CHANNELS):
        if K is None:
            raise ValueError("svd channels need the forward operator")
        return svd_channels(K, m)
    raise ValueError(f"unknown scheme {name!r}")


def scheme_compatible(name: str, m_inf: int, m: int) -> bool:
    name = name.lower()
    if name == BOX:
        return m >= 1 and m_inf % m == 0
    if name == HAT:
        return m >= 2 and (m_inf - 1) % (m - 1) == 0
    return 1 <= m <= m_inf


def angle_condition_bound(d: Discretisation) -> tuple[float, float | None, float | None]:
    """Off-diagonal Gram mass ``c`` and the induced bounds ``(c_m, C_m)``.

    ``c = max_j sum_{i != j} |(eta_i, eta_j)| / |eta_1|^2``.  For ``c < 1`` the
    singular values of ``P`` lie in ``[|eta_1|^2 (1-c), |eta_1|^2 (1+c)]``;
    otherwise no bounds are returned.
    """
    p = d.op.entries
    gram = p @ p.T
    scale = float(gram[0, 0])
    off = np.abs(gram - np.diag(np.diag(gram)))
    c = float(off.sum(axis=1).max() / scale)
    if c >= 1.0:
        return c, None, None
    return c, scale * (1.0 - c), scale * (1.0 + c)


def discretisation_error(d: Discretisation, y) -> float:
    """Exact ``|| y - P^+ P y ||``."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != d.m_inf:
        raise ValueError(f"vector has shape {y.shape}, expected ({d.m_inf},)")
    return float(np.linalg.norm(y - pseudo_inverse_apply(d.op, d.apply(y))))
