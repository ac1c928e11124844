"""Declarative experiment configuration, loaded from JSON and overridden by CLI flags."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .. import discretise
from .. import noise as noise_lib
from ..filters import make_filter
from ..regularise import THRESHOLD_RULES, TAU_TIMES_ESTIMATE

FDR_CONVERGENCE = "fdr_convergence"
IDR_SEMICONVERGENCE = "idr_semiconvergence"
COMPARISON = "comparison"
APRIORI_GRID = "apriori_grid"
COUNTEREXAMPLE_HEAVY_TAIL = "counterexample_heavy_tail"
COUNTEREXAMPLE_APRIORI = "counterexample_apriori"
EXPERIMENTS = (FDR_CONVERGENCE, IDR_SEMICONVERGENCE, COMPARISON, APRIORI_GRID,
               COUNTEREXAMPLE_HEAVY_TAIL, COUNTEREXAMPLE_APRIORI)

# part of every RNG key, so experiments never share noise
EXPERIMENT_CODES = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}

EMIT_KINDS = ("csv", "json", "svg")

_DEFAULT_PROBLEM = {
    COUNTEREXAMPLE_HEAVY_TAIL: "polynomial_diagonal",
    COUNTEREXAMPLE_APRIORI: "diagonal_apriori",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    ``reps_grid`` lists repetition counts for the fdr experiments,
    ``delta_multipliers`` the factors of the exact discretisation error used
    as ``delta_disc`` by the idr experiments.  ``rep_ratios`` gives ``n/m``
    for the counterexamples.  ``noise`` is a spec string: ``gpd`` or
    ``gpd:VAR``, ``gauss`` or ``gauss:STD``, ``feps:EPS``, ``twopoint``.
    Plain ``gpd`` and ``gauss`` have variance ``||y||`` (1 when ``y = 0``).
    """

    experiment: str = FDR_CONVERGENCE
    problem: str = "phillips"
    m_inf: int = 400
    channels: tuple[int, ...] = (5, 10, 20)
    scheme: str = "box"
    reps_grid: tuple[int, ...] = (10, 100, 1000, 10**4, 10**5, 10**6)
    delta_multipliers: tuple[float, ...] = (4.0, 2.0, 1.0, 0.5, 0.25)
    rep_ratios: tuple[float, ...] = (1.0,)
    noise: str = "gpd"
    filter: str = "tikhonov"
    tau: float = 1.2
    q: float = 0.7
    k_max: int = 200
    threshold_rule: str = TAU_TIMES_ESTIMATE
    alpha_rule: str = "inverse_m"
    runs: int = 100
    seed: int = 42
    n_cap: int = noise_lib.DEFAULT_N_CAP
    large_n_approx: bool = False
    out: str = "results"
    emit: tuple[str, ...] = ("csv", "json")
    threads: int | None = None
    timing: bool = False
    strict: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.m_inf < 1:
            raise ValueError("m_inf must be positive")
        if not self.channels:
            raise ValueError("channels must not be empty")
        spec = make_filter(self.filter)
        if not self.tau > spec.c0:
            raise ValueError(f"tau={self.tau} must exceed C_0={spec.c0} of the {spec.family} filter")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ValueError(f"unknown threshold rule {self.threshold_rule!r}")
        if self.alpha_rule not in ALPHA_RULES:
            raise ValueError(f"unknown alpha rule {self.alpha_rule!r}; choose from {sorted(ALPHA_RULES)}")
        bad = [e for e in self.emit if e not in EMIT_KINDS]
        if bad:
            raise ValueError(f"unknown emit kinds {bad}")
        if any(n < 1 for n in self.reps_grid):
            raise ValueError("repetition counts must be positive")
        if any(not d > 0 for d in self.delta_multipliers):
            raise ValueError("delta multipliers must be positive")
        if any(not r > 0 for r in self.rep_ratios):
            raise ValueError("repetition ratios must be positive")
        parse_noise(self.noise, 1.0)
        if self.uses_scheme:
            for m in self.channels:
                if not discretise.scheme_compatible(self.scheme, self.m_inf, m):
                    raise ValueError(f"m={m} is incompatible with the {self.scheme} scheme on m_inf={self.m_inf}")

    @property
    def uses_scheme(self) -> bool:
        """The counterexamples fix their own channels."""
        return self.experiment not in (COUNTEREXAMPLE_APRIORI, COUNTEREXAMPLE_HEAVY_TAIL)

    @property
    def code(self) -> int:
        return EXPERIMENT_CODES[self.experiment]

    @property
    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get("INVREG_THREADS")
        return max(1, int(env)) if env else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


ALPHA_RULES = {
    # a priori choices for the counterexample at m = n
    "inverse_m": lambda m, n: 1.0 / m,
    "sqrt_m_over_n": lambda m, n: math.sqrt(m / n),
}


def parse_noise(spec: str, y_norm: float) -> noise_lib.NoiseModel:
    """Build a noise model from a spec string; ``y_norm`` sets the default variance."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    default_var = y_norm if y_norm > 0 else 1.0
    try:
        if kind in ("gpd", "shifted_gpd"):
            return noise_lib.gpd_for_variance(float(arg) if arg else default_var)
        if kind in ("gauss", "gaussian"):
            return noise_lib.gaussian(float(arg) if arg else math.sqrt(default_var))
        if kind in ("feps", "heavy_tail", "heavy_tail_feps"):
            return noise_lib.heavy_tail(float(arg) if arg else 0.15)
        if kind in ("twopoint", "two_point", "two_point_degenerate"):
            return noise_lib.two_point(int(arg) if arg else 2)
    except ValueError as exc:
        raise ValueError(f"bad noise spec {spec!r}: {exc}") from None
    raise ValueError(f"unknown noise spec {spec!r}")


def parse_grid(text: str, integer: bool = True) -> tuple:
    """``"10:1e6:log"`` gives the decades from 10 to 1e6; otherwise a comma list."""
    text = text.strip()
    if text.endswith(":log"):
        lo, hi = (float(v) for v in text[:-4].split(":"))
        if not 0 < lo <= hi:
            raise ValueError(f"bad log grid {text!r}")
        k0, k1 = math.log10(lo), math.log10(hi)
        vals = 10.0 ** np.arange(round(k0), round(k1) + 1)
        return tuple(int(round(v)) for v in vals) if integer else tuple(float(v) for v in vals)
    parts = [p for p in text.split(",") if p.strip()]
    if integer:
        return tuple(int(float(p)) for p in parts)
    return tuple(_fraction(p) for p in parts)


def _fraction(text: str) -> float:
    if "/" in text:
        a, b = text.split("/")
        return float(a) / float(b)
    return float(text)


_TUPLE_FIELDS = {"channels": int, "reps_grid": int, "delta_multipliers": float, "rep_ratios": float, "emit": str}


def _coerce(key: str, value):
    if key in _TUPLE_FIELDS:
        if isinstance(value, str):
            if key == "emit":
                return tuple(v.strip() for v in value.split(",") if v.strip())
            return parse_grid(value, integer=_TUPLE_FIELDS[key] is int)
        cast = _TUPLE_FIELDS[key]
        return tuple(cast(v) if cast is not float else _fraction(str(v)) for v in value)
    return value


def from_dict(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    values = {k: _coerce(k, v) for k, v in data.items() if v is not None}
    if base is None:
        experiment = values.get("experiment", FDR_CONVERGENCE)
        if "problem" not in values and experiment in _DEFAULT_PROBLEM:
            values["problem"] = _DEFAULT_PROBLEM[experiment]
        if experiment == COUNTEREXAMPLE_HEAVY_TAIL:
            values.setdefault("filter", "cutoff")
            values.setdefault("noise", "feps:0.15")
            values.setdefault("channels", (500, 1000))
            values.setdefault("m_inf", 2000)
            values.setdefault("rep_ratios", (1.0, 100.0))
        elif experiment == COUNTEREXAMPLE_APRIORI:
            values.setdefault("channels", (50, 100, 200))
            values.setdefault("m_inf", 200)
        return ExperimentConfig(**values)
    return replace(base, **values)


def load(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_dict(data)
