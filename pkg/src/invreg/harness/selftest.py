"""Fast invariant checks behind ``invreg selftest``."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .. import discretise, estimate, filters, noise, problems, regularise
from ..linop import DenseOperator
from . import config as C
from .experiments import run_experiment

Check = Callable[[], tuple[bool, str]]


def _tikhonov_oracle() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        m_inf, m = int(rng.integers(4, 13)), int(rng.integers(2, 7))
        K = DenseOperator(rng.standard_normal((m_inf, m_inf)))
        d = discretise.custom(np.linalg.qr(rng.standard_normal((m_inf, m)))[0].T)
        y = rng.standard_normal(m)
        alpha = 10.0 ** rng.uniform(-3, 1)
        A = d.op.entries @ K.entries
        ref = np.linalg.solve(A.T @ A + alpha * np.eye(m_inf), A.T @ y)
        x = regularise.fdr_solve(K, d, y, filters.tikhonov(), alpha)
        worst = max(worst, np.linalg.norm(x - ref) / np.linalg.norm(ref))
    return worst <= 1e-8, f"max relative deviation {worst:.2e}"


def _filter_constants() -> tuple[bool, str]:
    lam = np.logspace(-8, 0, 400)
    alphas = 0.7 ** np.arange(0, 60)
    worst = max(filters.qualification_check(f, 0.0, alphas, lam)
                for f in (filters.tikhonov(), filters.spectral_cutoff(), filters.landweber()))
    return worst <= 1 + 1e-9, f"max C_0 {worst:.12f}"


def _box_kappa() -> tuple[bool, str]:
    d = discretise.box_channels(400, 20)
    s = np.linalg.svd(d.op.entries, compute_uv=False)
    return abs(s[0] / s[-1] - 1) <= 1e-12, f"kappa - 1 = {s[0] / s[-1] - 1:.1e}"


def _streaming_identity() -> tuple[bool, str]:
    rng = noise.make_rng(7)
    raw = rng.standard_normal((37, 5)) * 3 + 1
    st = noise.MeasurementStream(np.zeros(5), noise.make_rng(0))
    for lo, hi in ((0, 1), (1, 10), (10, 37)):
        st.ingest(raw[lo:hi])
    dev = max(np.max(np.abs(st.mean - raw.mean(0))),
              np.max(np.abs(st.m2 / 36 - raw.var(0, ddof=1)) / raw.var(0, ddof=1)))
    return dev <= 1e-10, f"max deviation {dev:.1e}"


def _repetition_rule() -> tuple[bool, str]:
    got = (estimate.apriori_repetitions(100, 1, 1), estimate.apriori_repetitions(100, 0.1, 1),
           estimate.apriori_repetitions(7, 0.3, 0.5))
    return got == (100, 10000, 312), f"got {got}"


def _problem_residuals() -> tuple[bool, str]:
    worst = 0.0
    for f in (problems.phillips, problems.gravity, problems.shaw):
        p = f(64)
        worst = max(worst, np.linalg.norm(p.K.entries @ p.x_true - p.y_true) / np.linalg.norm(p.y_true))
    return worst <= 1e-10, f"max residual {worst:.1e}"


def _determinism() -> tuple[bool, str]:
    base = dict(experiment="fdr_convergence", problem="phillips", m_inf=64, channels=(4, 8),
                reps_grid=(10, 100), runs=3, seed=5)
    a = run_experiment(C.from_dict({**base, "threads": 1})).records
    b = run_experiment(C.from_dict({**base, "threads": 4})).records
    return a == b, f"{len(a)} records compared"


def _discrepancy_property() -> tuple[bool, str]:
    p = problems.phillips(64)
    d = discretise.box_channels(64, 8)
    cfg = regularise.DiscrepancyConfig()
    st = noise.new_stream(d.apply(p.y_true), 3, 0)
    noise.simulate_rounds(st, noise.gpd_for_variance(float(np.linalg.norm(p.y_true))), 100)
    sol = regularise.fdr_discrepancy(p.K, d, st, filters.tikhonov(), cfg)
    if not sol.terminated:
        return False, "did not terminate"
    pk = regularise.composite(p.K, d)
    ok = sol.residual <= sol.threshold
    if sol.k > 0:
        prev = filters.residual_norm(pk.svd(), filters.tikhonov(), sol.alpha / cfg.q, st.mean)
        ok = ok and prev > sol.threshold
    return ok and math.isclose(sol.alpha, cfg.q**sol.k, rel_tol=1e-12), f"k={sol.k}"


CHECKS: dict[str, Check] = {
    "tikhonov normal-equation oracle": _tikhonov_oracle,
    "filter constant C_0 = 1": _filter_constants,
    "box scheme kappa = 1": _box_kappa,
    "streaming mean/variance identity": _streaming_identity,
    "a priori repetition counts": _repetition_rule,
    "test problem residuals": _problem_residuals,
    "discrepancy stopping property": _discrepancy_property,
    "determinism across worker counts": _determinism,
}


def run_selftest(out=print) -> bool:
    ok_all = True
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return ok_all
