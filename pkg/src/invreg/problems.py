"""Test problems: three classical Fredholm benchmarks and diagonal constructions.

The Fredholm kernels are discretised with the midpoint rule on ``n`` cells.
``phillips`` uses the orthonormal-box (Galerkin-like) scaling, so both ``K``
and ``x`` carry the factor ``sqrt(h)`` once; ``gravity`` and ``shaw`` sample
the solution directly and weight the kernel by ``h``.  In every case the
exact data is ``y = K x`` on the working grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import discretise
from .linop import DenseOperator


@dataclass(frozen=True)
class SmoothnessSpec:
    """Source condition ``x = (K^T K)^(nu/2) w`` with ``||w|| <= rho``."""

    nu: float
    rho: float
    w: np.ndarray | None = None

    def __post_init__(self):
        if not self.nu > 0 or not self.rho > 0:
            raise ValueError("nu and rho must be positive")


@dataclass(frozen=True, eq=False)
class TestProblem:
    name: str
    K: DenseOperator
    x_true: np.ndarray
    y_true: np.ndarray
    smoothness: SmoothnessSpec | None = None

    __test__ = False  # not a pytest class

    @property
    def m_inf(self) -> int:
        return self.K.rows


def _frozen(v: np.ndarray) -> np.ndarray:
    v = np.array(v, dtype=float)
    v.setflags(write=False)
    return v


def _problem(name, K, x, smoothness=None) -> TestProblem:
    op = K if isinstance(K, DenseOperator) else DenseOperator(K, name=name)
    x = _frozen(x)
    return TestProblem(name, op, x, _frozen(op.entries @ x), smoothness)


def _check_n(n: int, even: bool = False) -> None:
    if n < 16:
        raise ValueError(f"grid size n={n} must be at least 16")
    if even and n % 2:
        raise ValueError(f"grid size n={n} must be even")


def _phillips_phi(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) < 3.0, 1.0 + np.cos(np.pi * x / 3.0), 0.0)


def phillips(n: int) -> TestProblem:
    """Convolution kernel ``phi(s - t)`` on ``[-6, 6]`` with ``phi(x) = 1 + cos(pi x / 3)`` on ``|x| < 3``.

    The exact solution is ``phi`` itself.  Mildly ill-posed.
    """
    _check_n(n)
    h = 12.0 / n
    t = -6.0 + (np.arange(n) + 0.5) * h
    K = h * _phillips_phi(t[:, None] - t[None, :])
    return _problem("phillips", K, math.sqrt(h) * _phillips_phi(t))


def gravity(n: int, depth: float = 0.25) -> TestProblem:
    """1-D gravity surveying: ``d / (d^2 + (s - t)^2)^(3/2)`` on ``[0, 1]^2``.

    Exact solution ``sin(pi t) + 0.5 sin(2 pi t)``.  Severely ill-posed.
    """
    _check_n(n)
    if not depth > 0:
        raise ValueError("depth must be positive")
    h = 1.0 / n
    t = (np.arange(n) + 0.5) * h
    K = h * depth / (depth**2 + (t[:, None] - t[None, :]) ** 2) ** 1.5
    x = np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
    return _problem("gravity", K, x)


def shaw(n: int) -> TestProblem:
    """One-dimensional image restoration kernel on ``[-pi/2, pi/2]^2``.

    ``k(s, t) = (cos s + cos t)^2 (sin u / u)^2`` with ``u = pi (sin s + sin t)``;
    the solution is a sum of two Gaussians.  Severely ill-posed.
    """
    _check_n(n, even=True)
    h = math.pi / n
    t = -math.pi / 2 + (np.arange(n) + 0.5) * h
    c, s = np.cos(t), np.sin(t)
    u = math.pi * (s[:, None] + s[None, :])
    # np.sinc(x) = sin(pi x) / (pi x), so sinc(u / pi) = sin(u) / u
    K = h * (c[:, None] + c[None, :]) ** 2 * np.sinc(u / math.pi) ** 2
    x = 2.0 * np.exp(-6.0 * (t - 0.8) ** 2) + np.exp(-2.0 * (t + 0.5) ** 2)
    return _problem("shaw", K, x)


def diagonal_apriori_counterexample(alpha_seq, m: int) -> TestProblem:
    """``K = diag(alpha_j^(1/4))`` on the first ``m`` coordinates with zero truth."""
    a = np.asarray(alpha_seq, dtype=float)
    if a.ndim != 1 or a.size < m or m < 1:
        raise ValueError(f"need at least m={m} entries in alpha_seq")
    a = a[:m]
    if np.any(a <= 0) or np.any(np.diff(a) > 0):
        raise ValueError("alpha_seq must be positive and non-increasing")
    return _problem("diagonal_apriori", np.diag(a**0.25), np.zeros(m))


def polynomial_diagonal(q_exp: float, m_inf: int, smooth_data: bool = True) -> TestProblem:
    """``K = diag(j^(-q/2))``; with ``smooth_data`` the truth is ``x_j = 1/j`` so ``y_j = j^(-q/2-1)``."""
    if not q_exp > 1:
        raise ValueError("q_exp must exceed 1")
    if m_inf < 1:
        raise ValueError("m_inf must be positive")
    j = np.arange(1, m_inf + 1, dtype=float)
    x = 1.0 / j if smooth_data else np.zeros(m_inf)
    return _problem("polynomial_diagonal", np.diag(j ** (-q_exp / 2)), x)


def smoothness_decay_problem(m: int, ambient: int) -> tuple[TestProblem, discretise.Discretisation]:
    """``K = diag(1/j)`` with ``x_j = j^-2`` paired with the decaying-smoothness channels.

    The source condition ``nu = 1`` holds with ``w_j = 1/j``.
    """
    d = discretise.smoothness_decay_channels(m, ambient)
    j = np.arange(1, ambient + 1, dtype=float)
    w = _frozen(1.0 / j)
    spec = SmoothnessSpec(1.0, float(np.linalg.norm(w)), w)
    return _problem("smoothness_decay", np.diag(1.0 / j), j**-2.0, spec), d


_FREDHOLM = {"phillips": phillips, "gravity": gravity, "shaw": shaw}

PROBLEMS = {
    "phillips": "convolution kernel on [-6, 6], mildly ill-posed",
    "gravity": "gravity surveying, depth 0.25 on [0, 1], severely ill-posed",
    "shaw": "slit image restoration on [-pi/2, pi/2], severely ill-posed",
    "polynomial_diagonal": "diag(j^-3/4) with x_j = 1/j (heavy-tail counterexample)",
    "diagonal_apriori": "diag(j^-1/4) with zero truth (a priori counterexample)",
}


def make_problem(name: str, m_inf: int) -> TestProblem:
    """Build a problem by name on a working grid of size ``m_inf``."""
    key = name.lower()
    if key in _FREDHOLM:
        return _FREDHOLM[key](m_inf)
    if key == "polynomial_diagonal":
        return polynomial_diagonal(1.5, m_inf)
    if key == "diagonal_apriori":
        return diagonal_apriori_counterexample(1.0 / np.arange(1, m_inf + 1), m_inf)
    raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
