"""CSV, JSON and SVG output."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable
from xml.sax.saxutils import escape

from .experiments import ExperimentResult, RunRecord
from .summary import BoxStats

CSV_HEADER = ("experiment", "problem", "scheme", "m", "n_or_delta", "run", "relative_error",
              "alpha", "k", "terminated", "n_used", "wall_ms")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        # repr round-trips exactly
        return repr(v)
    return str(v)


def write_csv(records: Iterable[RunRecord], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_HEADER])
    return path


def _parse_opt(cast, text: str):
    return None if text == "" else cast(text)


def read_csv(path: str | Path) -> list[RunRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path} does not carry the expected header")
    out = []
    for row in rows[1:]:
        d = dict(zip(CSV_HEADER, row))
        out.append(RunRecord(
            d["experiment"], d["problem"], d["scheme"], int(d["m"]), float(d["n_or_delta"]), int(d["run"]),
            float(d["relative_error"]), float(d["alpha"]), _parse_opt(int, d["k"]),
            d["terminated"] == "true", int(d["n_used"]), _parse_opt(float, d["wall_ms"])))
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(result: ExperimentResult, stats: list[BoxStats], path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "config": result.config.to_dict(),
        "non_terminated": result.non_terminated,
        "extras": result.extras,
        "stats": [s.to_dict() for s in stats],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_boxplot(stats: list[BoxStats], title: str, xlabel: str, ylabel: str = "relative error",
                width: int = 640, height: int = 420) -> str:
    """Log-log box plot with one coloured series per ``(experiment, m)``."""
    left, right, top, bottom = 70, 140, 40, 55
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({s.n_or_delta for s in stats})
    pos = [x for x in xs if x > 0] or [1.0]
    ys = [v for s in stats for v in (s.whisker_lo, s.whisker_hi) if v > 0] or [1.0]
    lx0, lx1 = math.log10(min(pos)), math.log10(max(pos))
    ly0, ly1 = math.floor(math.log10(min(ys))), math.ceil(math.log10(max(ys)))
    if lx1 == lx0:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    if ly1 == ly0:
        ly1 = ly0 + 1

    def px(v):
        return left + (math.log10(v) - lx0) / (lx1 - lx0) * pw if v > 0 else left

    def py(v):
        v = max(v, 10.0**ly0)
        return top + (ly1 - math.log10(v)) / (ly1 - ly0) * ph

    series = []
    for s in stats:
        key = (s.experiment, s.m)
        if key not in series:
            series.append(key)
    slot = 36 / max(1, len(series))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2 - right / 2:.1f}" y="22" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for e in range(ly0, ly1 + 1):
        y = py(10.0**e)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    for x in xs:
        out.append(f'<text x="{px(x):.1f}" y="{top + ph + 16}" text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16,{top + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'{escape(ylabel)}</text>')
    for i, key in enumerate(series):
        colour = _PALETTE[i % len(_PALETTE)]
        offset = (i - (len(series) - 1) / 2) * slot
        ly = top + 14 + 16 * i
        out.append(f'<rect x="{left + pw + 12}" y="{ly - 9}" width="10" height="10" fill="{colour}"/>')
        out.append(f'<text x="{left + pw + 28}" y="{ly}">{escape(key[0])} m={key[1]}</text>')
        for s in (s for s in stats if (s.experiment, s.m) == key):
            cx = px(s.n_or_delta) + offset
            hw = max(2.0, slot * 0.35)
            y1, y3, ym = py(s.q1), py(s.q3), py(s.median)
            out.append(f'<line x1="{cx:.1f}" y1="{py(s.whisker_lo):.1f}" x2="{cx:.1f}" y2="{y1:.1f}" stroke="{colour}"/>')
            out.append(f'<line x1="{cx:.1f}" y1="{y3:.1f}" x2="{cx:.1f}" y2="{py(s.whisker_hi):.1f}" stroke="{colour}"/>')
            out.append(f'<rect x="{cx - hw:.1f}" y="{y3:.1f}" width="{2 * hw:.1f}" height="{max(y1 - y3, 0.5):.1f}" '
                       f'fill="white" fill-opacity="0.6" stroke="{colour}"/>')
            out.append(f'<line x1="{cx - hw:.1f}" y1="{ym:.1f}" x2="{cx + hw:.1f}" y2="{ym:.1f}" '
                       f'stroke="{colour}" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _xlabel(experiment: str) -> str:
    if experiment.startswith(("idr_", "comparison", "apriori_idr")):
        return "delta_disc / d_m"
    return "repetitions n"


def write_svgs(stats: list[BoxStats], out_dir: str | Path) -> list[Path]:
    """One SVG per ``(experiment, problem)`` panel."""
    out_dir = Path(out_dir)
    panels: dict[tuple[str, str], list[BoxStats]] = {}
    for s in stats:
        panels.setdefault((s.experiment, s.problem), []).append(s)
    paths = []
    for (exp, prob), group in panels.items():
        svg = svg_boxplot(group, f"{exp}: {prob}", _xlabel(exp))
        p = out_dir / f"{exp}_{prob}.svg"
        p.write_text(svg, encoding="utf-8")
        paths.append(p)
    return paths


def emit(result: ExperimentResult, stats: list[BoxStats], out_dir: str | Path,
         kinds: Iterable[str] = ("csv", "json")) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = result.config.experiment
    paths = []
    kinds = set(kinds)
    if "csv" in kinds:
        paths.append(write_csv(result.records, out_dir / f"{name}.csv"))
    if "json" in kinds:
        paths.append(write_json(result, stats, out_dir / f"{name}_summary.json"))
    if "svg" in kinds:
        paths.extend(write_svgs(stats, out_dir))
    return paths
