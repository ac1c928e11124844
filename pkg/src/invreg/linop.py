"""Dense linear operators with a cached thin singular value decomposition."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

#: Singular values below ``RANK_TOL * sigma_1`` are treated as zero.
RANK_TOL = 1e-12


class SvdError(RuntimeError):
    """Raised when LAPACK fails to converge on an SVD."""


@dataclass(frozen=True)
class SvdTriple:
    """Thin SVD ``A = U diag(s) V^T``.

    All triples with ``s_j > 0`` are stored.  ``rank`` counts the leading
    ones above ``RANK_TOL * s_1``; the pseudo-inverse and projections use only
    those, while spectral filters damp the tail themselves and see all of it.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rank: int

    @property
    def left_vectors(self) -> np.ndarray:
        return self.u

    @property
    def singular_values(self) -> np.ndarray:
        return self.s

    @property
    def right_vectors(self) -> np.ndarray:
        return self.v

    @property
    def rows(self) -> int:
        return self.u.shape[0]

    def truncated(self) -> "SvdTriple":
        """The leading ``rank`` triples only."""
        r = self.rank
        return SvdTriple(self.u[:, :r], self.s[:r], self.v[:, :r], r)

    @property
    def cols(self) -> int:
        return self.v.shape[0]


class DenseOperator:
    """An immutable real matrix.

    The SVD is computed on first request and then reused; the computation is
    guarded by a lock so concurrent callers see exactly one decomposition.
    """

    def __init__(self, entries, *, name: str | None = None):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim != 2:
            raise ValueError(f"operator entries must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator entries must be finite")
        a.setflags(write=False)
        self._a = a
        self.name = name
        self._svd: SvdTriple | None = None
        self._lock = threading.Lock()

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def rows(self) -> int:
        return self._a.shape[0]

    @property
    def cols(self) -> int:
        return self._a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    @property
    def T(self) -> "DenseOperator":
        return DenseOperator(self._a.T)

    def __matmul__(self, other):
        if isinstance(other, DenseOperator):
            return DenseOperator(self._a @ other._a)
        return apply(self, other)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"DenseOperator{label}({self.rows}x{self.cols})"

    def svd(self) -> SvdTriple:
        if self._svd is None:
            with self._lock:
                if self._svd is None:
                    self._svd = _compute_svd(self._a)
        return self._svd


def _monomial_svd(a: np.ndarray):
    """Exact SVD when every row and column holds at most one non-zero entry."""
    nz = a != 0
    if np.any(nz.sum(axis=0) > 1) or np.any(nz.sum(axis=1) > 1):
        return None
    rows, cols = np.nonzero(a)
    vals = a[rows, cols]
    # stable sort keeps equal singular values in row order
    order = np.argsort(-np.abs(vals), kind="stable")
    rows, cols, vals = rows[order], cols[order], vals[order]
    r = vals.size
    u = np.zeros((a.shape[0], r))
    v = np.zeros((a.shape[1], r))
    u[rows, np.arange(r)] = np.sign(vals)
    v[cols, np.arange(r)] = 1.0
    return u, np.abs(vals), v.T


def _compute_svd(a: np.ndarray) -> SvdTriple:
    fast = _monomial_svd(a)
    if fast is not None:
        u, s, vt = fast
    else:
        try:
            u, s, vt = np.linalg.svd(a, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SvdError(f"SVD of {a.shape[0]}x{a.shape[1]} matrix did not converge") from exc
    keep = int(np.count_nonzero(s > 0))
    rank = int(np.count_nonzero(s > RANK_TOL * s[0])) if keep else 0
    u = np.ascontiguousarray(u[:, :keep])
    v = np.ascontiguousarray(vt[:keep].T)
    s = s[:keep].copy()
    for arr in (u, s, v):
        arr.setflags(write=False)
    return SvdTriple(u=u, s=s, v=v, rank=rank)


def svd(op: DenseOperator) -> SvdTriple:
    return op.svd()


def _as_vector(x, size: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != size:
        raise ValueError(f"{what} has shape {x.shape}, expected ({size},)")
    return x


def apply(op: DenseOperator, x) -> np.ndarray:
    x = _as_vector(x, op.cols, "input vector")
    return op.entries @ x


def adjoint_apply(op: DenseOperator, y) -> np.ndarray:
    y = _as_vector(y, op.rows, "input vector")
    return op.entries.T @ y


def pseudo_inverse_apply(op: DenseOperator, y) -> np.ndarray:
    """Minimal-norm least-squares solution ``sum_j s_j^-1 (y, u_j) v_j``."""
    y = _as_vector(y, op.rows, "data vector")
    t = op.svd().truncated()
    return t.v @ ((t.u.T @ y) / t.s)


def row_space_projection(op: DenseOperator, x) -> np.ndarray:
    """Orthogonal projection onto the (numerical) row space of ``op``."""
    x = _as_vector(x, op.cols, "input vector")
    v = op.svd().truncated().v
    return v @ (v.T @ x)


def condition_number(op: DenseOperator) -> float:
    s = op.svd().truncated().s
    if s.size == 0:
        raise ValueError("condition number undefined for an operator of rank 0")
    return float(s[0] / s[-1])
