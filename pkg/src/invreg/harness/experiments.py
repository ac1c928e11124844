"""Monte Carlo experiment runners.

Every run owns a measurement stream keyed by
``(seed, experiment code, m, grid index, run)``, so results do not depend on
the number of worker threads or on task scheduling.  Records come back in
a fixed (m, grid point, run) order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .. import discretise, problems
from ..filters import make_filter
from ..linop import row_space_projection
from ..noise import new_stream, simulate_to
from ..regularise import (DiscrepancyConfig, composite, fdr_apriori, fdr_discrepancy, fdr_solve,
                          idr_apriori, idr_discrepancy)
from . import config as C


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    problem: str
    scheme: str
    m: int
    n_or_delta: float
    run: int
    relative_error: float
    alpha: float
    k: int | None
    terminated: bool
    n_used: int
    wall_ms: float | None = None


@dataclass
class ExperimentResult:
    config: C.ExperimentConfig
    records: list[RunRecord]
    extras: dict = field(default_factory=dict)

    @property
    def non_terminated(self) -> int:
        return sum(not r.terminated for r in self.records)


@dataclass(frozen=True, eq=False)
class _Setup:
    """Everything shared by the runs at one channel count."""

    problem: problems.TestProblem
    d: discretise.Discretisation
    truth: np.ndarray
    d_m: float
    c_lower: float
    saturation: float


def relative_error(x: np.ndarray, x_true: np.ndarray) -> float:
    """``||x - x_true|| / ||x_true||``, or the plain error when ``x_true = 0``."""
    err = float(np.linalg.norm(x - x_true))
    scale = float(np.linalg.norm(x_true))
    return err / scale if scale > 0 else err


def _lower_bound(d: discretise.Discretisation) -> float:
    if d.c_lower is not None:
        return d.c_lower
    _, c_low, _ = discretise.angle_condition_bound(d)
    if c_low is None:
        raise ValueError(f"{d.scheme} channels satisfy no angle condition; no lower bound available")
    return c_low


def _setup(problem: problems.TestProblem, d: discretise.Discretisation) -> _Setup:
    y, x = problem.y_true, problem.x_true
    truth = d.apply(y)
    d_m = discretise.discretisation_error(d, y)
    pk = composite(problem.K, d)
    xn = float(np.linalg.norm(x))
    resid = float(np.linalg.norm(x - row_space_projection(pk, x)))
    return _Setup(problem, d, truth, d_m, _lower_bound(d), resid / xn if xn > 0 else resid)


def _setups(cfg: C.ExperimentConfig) -> dict[int, _Setup]:
    if cfg.experiment == C.COUNTEREXAMPLE_APRIORI:
        out = {}
        for m in cfg.channels:
            # K = diag(alpha_j^(1/4)) with alpha_j = 1/j, channels along the singular basis
            p = problems.diagonal_apriori_counterexample(1.0 / np.arange(1, m + 1), m)
            out[m] = _setup(p, discretise.custom(np.eye(m), 1.0, 1.0))
        return out
    problem = problems.make_problem(cfg.problem, cfg.m_inf)
    if cfg.experiment == C.COUNTEREXAMPLE_HEAVY_TAIL:
        return {m: _setup(problem, discretise.svd_channels(problem.K, m)) for m in cfg.channels}
    return {m: _setup(problem, discretise.make_scheme(cfg.scheme, cfg.m_inf, m, problem.K))
            for m in cfg.channels}


def _noise(cfg: C.ExperimentConfig, setup: _Setup):
    return C.parse_noise(cfg.noise, float(np.linalg.norm(setup.problem.y_true)))


def _dcfg(cfg: C.ExperimentConfig) -> DiscrepancyConfig:
    return DiscrepancyConfig(cfg.tau, cfg.q, cfg.k_max, cfg.threshold_rule)


def _stream(cfg, setup, m, grid, run):
    return new_stream(setup.truth, cfg.seed, cfg.code, m, grid, run,
                      n_cap=cfg.n_cap, large_n_approx=cfg.large_n_approx)


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.t = time.perf_counter()

    def lap(self) -> float | None:
        if not self.enabled:
            return None
        now = time.perf_counter()
        ms, self.t = (now - self.t) * 1e3, now
        return ms


def _record(cfg, label, setup, m, grid_value, run, sol, clock) -> RunRecord:
    return RunRecord(label, setup.problem.name, setup.d.scheme, m, grid_value, run,
                     relative_error(sol.x, setup.problem.x_true), float(sol.alpha), sol.k,
                     bool(sol.terminated), int(sol.n_used), clock.lap())


def _run_tasks(cfg: C.ExperimentConfig, fn, tasks) -> tuple[list[RunRecord], int]:
    workers = cfg.worker_count
    if workers == 1:
        chunks = [fn(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(fn, tasks))
    records = [r for recs, _ in chunks for r in recs]
    approximated = sum(a for _, a in chunks)
    return records, approximated


def run_fdr_convergence(cfg: C.ExperimentConfig) -> ExperimentResult:
    """The fdr discrepancy rule along the repetition grid; the runs at one ``m`` grow a single stream."""
    setups = _setups(cfg)
    spec = make_filter(cfg.filter)
    dcfg = _dcfg(cfg)
    grid = sorted(cfg.reps_grid)

    def task(args):
        m, run = args
        s = setups[m]
        model = _noise(cfg, s)
        stream = _stream(cfg, s, m, 0, run)
        clock = _Clock(cfg.timing)
        out = []
        for n in grid:
            simulate_to(stream, model, n)
            sol = fdr_discrepancy(s.problem.K, s.d, stream, spec, dcfg)
            out.append(_record(cfg, cfg.experiment, s, m, n, run, sol, clock))
        return out, int(stream.approximated)

    tasks = [(m, r) for m in cfg.channels for r in range(cfg.runs)]
    records, approx = _run_tasks(cfg, task, tasks)
    # regroup into (m, n, run) order
    records.sort(key=lambda r: (cfg.channels.index(r.m), r.n_or_delta, r.run))
    return ExperimentResult(cfg, records, _extras(cfg, setups, approx))


def run_idr_semiconvergence(cfg: C.ExperimentConfig) -> ExperimentResult:
    """The idr discrepancy rule with ``delta_disc`` set to multiples of the exact discretisation error."""
    setups = _setups(cfg)
    spec = make_filter(cfg.filter)
    dcfg = _dcfg(cfg)

    def task(args):
        m, gi, run = args
        s = setups[m]
        mult = cfg.delta_multipliers[gi]
        stream = _stream(cfg, s, m, gi, run)
        clock = _Clock(cfg.timing)
        sol = idr_discrepancy(s.problem.K, s.d, stream, _noise(cfg, s), spec, dcfg,
                              mult * s.d_m, s.c_lower, cfg.n_cap)
        return [_record(cfg, cfg.experiment, s, m, mult, run, sol, clock)], 0

    tasks = [(m, gi, r) for m in cfg.channels for gi in range(len(cfg.delta_multipliers))
             for r in range(cfg.runs)]
    records, approx = _run_tasks(cfg, task, tasks)
    return ExperimentResult(cfg, records, _extras(cfg, setups, approx))


def run_comparison(cfg: C.ExperimentConfig) -> ExperimentResult:
    """The idr rule at ``delta_disc = d_m`` picks ``n``; the fdr rule reuses the same averaged data."""
    setups = _setups(cfg)
    spec = make_filter(cfg.filter)
    dcfg = _dcfg(cfg)

    def task(args):
        m, run = args
        s = setups[m]
        stream = _stream(cfg, s, m, 0, run)
        clock = _Clock(cfg.timing)
        idr = idr_discrepancy(s.problem.K, s.d, stream, _noise(cfg, s), spec, dcfg, s.d_m, s.c_lower, cfg.n_cap)
        r_idr = _record(cfg, "comparison_idr", s, m, 1.0, run, idr, clock)
        fdr = fdr_discrepancy(s.problem.K, s.d, stream, spec, dcfg)
        r_fdr = _record(cfg, "comparison_fdr", s, m, 1.0, run, fdr, clock)
        if idr.repetitions_capped:
            r_fdr = replace(r_fdr, terminated=False)
        return [r_fdr, r_idr], 0

    tasks = [(m, r) for m in cfg.channels for r in range(cfg.runs)]
    records, approx = _run_tasks(cfg, task, tasks)
    records.sort(key=lambda r: (r.experiment, cfg.channels.index(r.m), r.run))
    return ExperimentResult(cfg, records, _extras(cfg, setups, approx))


def run_apriori_grid(cfg: C.ExperimentConfig) -> ExperimentResult:
    """A priori fdr along the repetition grid and a priori idr along the ``delta`` multipliers."""
    setups = _setups(cfg)
    spec = make_filter(cfg.filter)
    grid = sorted(cfg.reps_grid)

    def fdr_task(args):
        m, run = args
        s = setups[m]
        model = _noise(cfg, s)
        stream = _stream(cfg, s, m, 0, run)
        clock = _Clock(cfg.timing)
        out = []
        for n in grid:
            simulate_to(stream, model, n)
            out.append(_record(cfg, "apriori_fdr", s, m, n, run, fdr_apriori(s.problem.K, s.d, stream, spec), clock))
        return out, int(stream.approximated)

    def idr_task(args):
        m, gi, run = args
        s = setups[m]
        mult = cfg.delta_multipliers[gi]
        stream = _stream(cfg, s, m, 1 + gi, run)
        clock = _Clock(cfg.timing)
        sol = idr_apriori(s.problem.K, s.d, stream, _noise(cfg, s), spec, mult * s.d_m, s.c_lower)
        return [_record(cfg, "apriori_idr", s, m, mult, run, sol, clock)], int(stream.approximated)

    fdr_records, a1 = _run_tasks(cfg, fdr_task, [(m, r) for m in cfg.channels for r in range(cfg.runs)])
    fdr_records.sort(key=lambda r: (cfg.channels.index(r.m), r.n_or_delta, r.run))
    idr_records, a2 = _run_tasks(cfg, idr_task, [(m, gi, r) for m in cfg.channels
                                                 for gi in range(len(cfg.delta_multipliers))
                                                 for r in range(cfg.runs)])
    return ExperimentResult(cfg, fdr_records + idr_records, _extras(cfg, setups, a1 + a2))


def _counter_reps(m: int, ratio: float) -> int:
    return max(2, int(round(ratio * m)))


def run_counterexamples(cfg: C.ExperimentConfig) -> ExperimentResult:
    """Both counterexamples with ``n = ratio * m`` repetitions.

    ``counterexample_apriori`` applies Tikhonov at the fixed rule
    ``cfg.alpha_rule`` on ``diag(j^(-1/4))`` with zero truth, so the recorded
    error is the plain norm of the reconstruction.  ``counterexample_heavy_tail``
    runs the fdr discrepancy rule on the polynomial diagonal with channels along the
    singular basis.
    """
    setups = _setups(cfg)
    spec = make_filter(cfg.filter)
    dcfg = _dcfg(cfg)
    apriori = cfg.experiment == C.COUNTEREXAMPLE_APRIORI
    rule = C.ALPHA_RULES[cfg.alpha_rule]

    def task(args):
        m, gi, run = args
        s = setups[m]
        n = _counter_reps(m, cfg.rep_ratios[gi])
        stream = _stream(cfg, s, m, gi, run)
        clock = _Clock(cfg.timing)
        simulate_to(stream, _noise(cfg, s), n)
        if apriori:
            alpha = rule(m, n)
            x = fdr_solve(s.problem.K, s.d, stream.mean, spec, alpha)
            sol = _Apriori(x, alpha, n)
        else:
            sol = fdr_discrepancy(s.problem.K, s.d, stream, spec, dcfg)
        return [_record(cfg, cfg.experiment, s, m, n, run, sol, clock)], int(stream.approximated)

    tasks = [(m, gi, r) for m in cfg.channels for gi in range(len(cfg.rep_ratios)) for r in range(cfg.runs)]
    records, approx = _run_tasks(cfg, task, tasks)
    extras = _extras(cfg, setups, approx)
    if not apriori:
        extras["error_floor"] = {str(m): heavy_tail_error_floor(1.5, cfg.tau, cfg.rep_ratios[0], setups[m].problem)
                                 for m in cfg.channels}
    return ExperimentResult(cfg, records, extras)


@dataclass(frozen=True)
class _Apriori:
    x: np.ndarray
    alpha: float
    n_used: int
    k: None = None
    terminated: bool = True


def heavy_tail_error_floor(q_exp: float, tau: float, c: float, problem: problems.TestProblem) -> float:
    """Relative form of the level ``C`` the heavy-tail errors stay above when ``m/n >= c``.

    ``C^2 = sum_{j: j^-q <= q c (tau-1)^2 / pi^2} j^-2``, truncated to the working grid.
    """
    j = np.arange(1, problem.m_inf + 1, dtype=float)
    level = q_exp * c * (tau - 1) ** 2 / math.pi**2
    floor = math.sqrt(float(np.sum(j[j ** (-q_exp) <= level] ** -2.0)))
    return floor / float(np.linalg.norm(problem.x_true))


def _extras(cfg: C.ExperimentConfig, setups: dict[int, _Setup], approximated: int) -> dict:
    return {
        "saturation": {str(m): s.saturation for m, s in setups.items()},
        "discretisation_error": {str(m): s.d_m for m, s in setups.items()},
        "c_lower": {str(m): s.c_lower for m, s in setups.items()},
        "large_n_approx": cfg.large_n_approx,
        "approximated_runs": approximated,
    }


RUNNERS = {
    C.FDR_CONVERGENCE: run_fdr_convergence,
    C.IDR_SEMICONVERGENCE: run_idr_semiconvergence,
    C.COMPARISON: run_comparison,
    C.APRIORI_GRID: run_apriori_grid,
    C.COUNTEREXAMPLE_HEAVY_TAIL: run_counterexamples,
    C.COUNTEREXAMPLE_APRIORI: run_counterexamples,
}


def run_experiment(cfg: C.ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)
