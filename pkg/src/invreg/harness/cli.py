"""Command line interface: ``invreg run``, ``invreg problems list``, ``invreg selftest``."""

from __future__ import annotations

import argparse
import logging
import sys

from .. import problems
from . import config as C
from .emit import emit
from .experiments import run_experiment
from .selftest import run_selftest
from .summary import summarize

log = logging.getLogger("invreg")

# CLI flag -> config key
_FLAG_KEYS = {
    "experiment": "experiment", "problem": "problem", "m_inf": "m_inf", "channels": "channels",
    "reps": "reps_grid", "delta_mults": "delta_multipliers", "rep_ratios": "rep_ratios",
    "scheme": "scheme", "noise": "noise", "filter": "filter", "tau": "tau", "q": "q",
    "k_max": "k_max", "threshold_rule": "threshold_rule", "alpha_rule": "alpha_rule",
    "runs": "runs", "seed": "seed", "n_cap": "n_cap", "out": "out", "emit": "emit",
    "threads": "threads",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invreg", description="Discrepancy-principle regularisation "
                                "from repeated noisy measurements: Monte Carlo experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", help="JSON config file; flags override its values")
    r.add_argument("--experiment", choices=C.EXPERIMENTS)
    r.add_argument("--problem")
    r.add_argument("--m-inf", type=int)
    r.add_argument("--channels", help="comma list, e.g. 5,10,20")
    r.add_argument("--reps", help="repetition grid, comma list or LO:HI:log")
    r.add_argument("--delta-mults", help="multipliers of d_m, e.g. 4,2,1,0.5,0.25")
    r.add_argument("--rep-ratios", help="n/m ratios for the counterexamples")
    r.add_argument("--scheme", choices=("box", "hat", "svd"))
    r.add_argument("--noise", help="gpd[:VAR] | gauss[:STD] | feps:EPS | twopoint[:M]")
    r.add_argument("--filter", choices=("tikhonov", "cutoff", "landweber"))
    r.add_argument("--tau", type=float)
    r.add_argument("--q", type=float)
    r.add_argument("--k-max", type=int)
    r.add_argument("--threshold-rule", choices=("tau_times_estimate", "fixed_kappa"))
    r.add_argument("--alpha-rule", choices=sorted(C.ALPHA_RULES))
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--n-cap", type=int)
    r.add_argument("--out", help="output directory")
    r.add_argument("--emit", help="comma list of csv,json,svg")
    r.add_argument("--threads", type=int, help="worker threads (default: $INVREG_THREADS or 1)")
    r.add_argument("--large-n-approx", action="store_true", default=None,
                   help="normal approximation above 1e7 repetitions (flagged in the summary)")
    r.add_argument("--timing", action="store_true", default=None, help="fill the wall_ms column")
    r.add_argument("--strict", action="store_true", default=None, help="exit 2 if any run did not terminate")

    pr = sub.add_parser("problems", help="list the test problems")
    pr.add_argument("action", choices=("list",))

    sub.add_parser("selftest", help="run the invariant checks")
    return p


def config_from_args(args: argparse.Namespace) -> C.ExperimentConfig:
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items()}
    for flag in ("large_n_approx", "timing", "strict"):
        overrides[flag] = getattr(args, flag)
    if args.config:
        return C.load(args.config, overrides)
    return C.from_dict({k: v for k, v in overrides.items() if v is not None})


def _run(args) -> int:
    cfg = config_from_args(args)
    log.info("running %s on %s, m in %s, %d runs, %d worker(s)",
             cfg.experiment, cfg.problem, list(cfg.channels), cfg.runs, cfg.worker_count)
    result = run_experiment(cfg)
    stats = summarize(result.records)
    for path in emit(result, stats, cfg.out, cfg.emit):
        print(path)
    for s in stats:
        print(f"{s.experiment:22s} m={s.m:<5d} x={s.n_or_delta:<10g} median={s.median:.4g} "
              f"q1={s.q1:.4g} q3={s.q3:.4g} excluded={s.excluded}")
    if result.non_terminated:
        log.warning("%d run(s) did not terminate", result.non_terminated)
        if cfg.strict:
            return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "problems":
            for name, desc in problems.PROBLEMS.items():
                print(f"{name:22s} {desc}")
            return 0
        return 0 if run_selftest() else 1
    except (ValueError, OSError) as exc:
        print(f"invreg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
