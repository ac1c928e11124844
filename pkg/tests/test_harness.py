import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invreg.harness import cli, config as C, emit, experiments, summary
from invreg.harness.experiments import RunRecord


def _small(**kw):
    base = dict(experiment="fdr_convergence", problem="phillips", m_inf=64, channels=(4, 8),
                reps_grid=(10, 100), runs=3, seed=5)
    base.update(kw)
    return C.from_dict(base)


# config ---------------------------------------------------------------------

def test_config_defaults_and_validation():
    cfg = C.ExperimentConfig()
    assert cfg.tau == 1.2 and cfg.runs == 100 and cfg.m_inf == 400
    with pytest.raises(ValueError):
        C.from_dict({"runs": 0})
    with pytest.raises(ValueError):
        C.from_dict({"tau": 1.0})
    with pytest.raises(ValueError):
        C.from_dict({"channels": [7], "m_inf": 400})
    with pytest.raises(ValueError):
        C.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        C.from_dict({"noise": "cauchy"})


def test_config_experiment_defaults():
    ht = C.from_dict({"experiment": "counterexample_heavy_tail"})
    assert ht.problem == "polynomial_diagonal" and ht.filter == "cutoff" and ht.noise == "feps:0.15"
    ap = C.from_dict({"experiment": "counterexample_apriori"})
    assert ap.channels == (50, 100, 200) and ap.problem == "diagonal_apriori"


def test_parse_grid():
    assert C.parse_grid("10:1e6:log") == (10, 100, 1000, 10**4, 10**5, 10**6)
    assert C.parse_grid("4,2,1,1/2,0.25", integer=False) == (4.0, 2.0, 1.0, 0.5, 0.25)
    with pytest.raises(ValueError):
        C.parse_grid("0:10:log")


def test_parse_noise():
    assert C.parse_noise("gpd", 15.0).variance == pytest.approx(15.0)
    assert C.parse_noise("gpd:2", 15.0).variance == pytest.approx(2.0)
    assert C.parse_noise("gauss", 0.0).std == 1.0
    assert C.parse_noise("feps:0.1", 1.0).eps == 0.1
    assert C.parse_noise("twopoint:3", 1.0).index == 3


def test_load_with_overrides(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"experiment": "fdr_convergence", "channels": [5, 10], "runs": 7}))
    cfg = C.load(path, {"runs": 3, "seed": None})
    assert cfg.channels == (5, 10) and cfg.runs == 3 and cfg.seed == 42


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("INVREG_THREADS", "3")
    assert C.ExperimentConfig().worker_count == 3
    assert C.from_dict({"threads": 2}).worker_count == 2


# summary --------------------------------------------------------------------

def _rec(err, run=0, terminated=True, exp="e", m=5, x=10.0):
    return RunRecord(exp, "p", "box", m, x, run, err, 1.0, 0, terminated, 10)


def test_box_stats_examples():
    s = summary.box_stats([1, 2, 3, 4, 5])
    assert (s["median"], s["q1"], s["q3"]) == (3.0, 2.0, 4.0)
    c = summary.box_stats([0.7] * 9)
    assert all(c[k] == 0.7 for k in ("median", "q1", "q3", "whisker_lo", "whisker_hi"))
    with pytest.raises(ValueError):
        summary.box_stats([])


def test_box_stats_whiskers_and_outliers():
    s = summary.box_stats([1, 2, 3, 4, 5, 100])
    assert s["outliers"] == 1 and s["whisker_hi"] == 5.0 and s["whisker_lo"] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=60), st.randoms())
def test_box_stats_oracle_and_permutation(values, rnd):
    s = summary.box_stats(values)
    v = sorted(values)
    n = len(v)

    def q(p):  # type-7 by hand
        h = (n - 1) * p
        lo = math.floor(h)
        return v[lo] + (h - lo) * (v[min(lo + 1, n - 1)] - v[lo])

    assert s["q1"] == pytest.approx(q(0.25), rel=1e-12, abs=1e-9)
    assert s["median"] == pytest.approx(q(0.5), rel=1e-12, abs=1e-9)
    assert s["q3"] == pytest.approx(q(0.75), rel=1e-12, abs=1e-9)
    assert s["q1"] <= s["median"] <= s["q3"]
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert summary.box_stats(shuffled) == s


def test_summarize_excludes_non_terminated():
    recs = [_rec(0.1, 0), _rec(0.2, 1), _rec(5.0, 2, terminated=False)]
    (s,) = summary.summarize(recs)
    assert s.count == 2 and s.excluded == 1 and s.median == pytest.approx(0.15)
    with pytest.raises(ValueError):
        summary.summarize([_rec(1.0, terminated=False)])
    assert summary.lookup([s], "e", 5, 10).median == s.median


# emit -----------------------------------------------------------------------

def test_csv_header_only_for_empty(tmp_path):
    path = emit.write_csv([], tmp_path / "x.csv")
    assert path.read_text() == ",".join(emit.CSV_HEADER) + "\n"
    assert emit.read_csv(path) == []


def test_csv_round_trip(tmp_path):
    result = experiments.run_experiment(_small())
    path = emit.write_csv(result.records, tmp_path / "r.csv")
    assert emit.read_csv(path) == result.records
    recs = [_rec(1 / 3, 0), RunRecord("e", "p", "box", 5, 0.25, 1, 0.1, 0.5, None, False, 7, 12.5)]
    path = emit.write_csv(recs, tmp_path / "s.csv")
    assert emit.read_csv(path) == recs


def test_json_and_svg(tmp_path):
    result = experiments.run_experiment(_small())
    stats = summary.summarize(result.records)
    paths = emit.emit(result, stats, tmp_path, ("csv", "json", "svg"))
    doc = json.loads((tmp_path / "fdr_convergence_summary.json").read_text())
    assert doc["config"]["channels"] == [4, 8] and len(doc["stats"]) == 4
    svgs = [p for p in paths if p.suffix == ".svg"]
    assert len(svgs) == 1
    root = ET.parse(svgs[0]).getroot()
    assert root.tag.endswith("svg")


def test_json_non_finite_becomes_null(tmp_path):
    result = experiments.ExperimentResult(_small(), [], {"x": math.inf})
    emit.write_json(result, [], tmp_path / "j.json")
    assert json.loads((tmp_path / "j.json").read_text())["extras"]["x"] is None


# experiments ----------------------------------------------------------------

def test_alpha_matches_grid_index():
    result = experiments.run_experiment(_small())
    for r in result.records:
        assert math.isclose(r.alpha, 0.7**r.k, rel_tol=1e-12)
    assert [(r.m, r.n_or_delta, r.run) for r in result.records] == sorted(
        (r.m, r.n_or_delta, r.run) for r in result.records)


def test_zero_noise_error_equals_saturation():
    cfg = _small(noise="gauss:0", filter="cutoff", k_max=400)
    result = experiments.run_experiment(cfg)
    for r in result.records:
        sat = result.extras["saturation"][str(r.m)]
        assert r.relative_error == pytest.approx(sat, rel=1e-6)


def test_comparison_shares_noise():
    cfg = _small(experiment="comparison", channels=(8,), runs=2, m_inf=64)
    result = experiments.run_experiment(cfg)
    by = {(r.experiment, r.run): r for r in result.records}
    for run in range(2):
        assert by[("comparison_fdr", run)].n_used == by[("comparison_idr", run)].n_used


def test_idr_semiconvergence_runs():
    cfg = _small(experiment="idr_semiconvergence", problem="gravity", channels=(8,), delta_multipliers=(2.0, 1.0))
    result = experiments.run_experiment(cfg)
    assert {r.n_or_delta for r in result.records} == {2.0, 1.0}
    assert all(r.n_used >= 2 for r in result.records)


def test_apriori_grid_runs():
    cfg = _small(experiment="apriori_grid", delta_multipliers=(1.0,))
    result = experiments.run_experiment(cfg)
    assert {r.experiment for r in result.records} == {"apriori_fdr", "apriori_idr"}
    assert all(r.k is None for r in result.records)


def test_counterexample_apriori_error_is_plain_norm():
    cfg = C.from_dict({"experiment": "counterexample_apriori", "channels": [10], "runs": 2, "noise": "gauss:1"})
    result = experiments.run_experiment(cfg)
    assert all(r.n_used == 10 and r.alpha == 0.1 for r in result.records)


def test_timing_column():
    assert all(r.wall_ms is None for r in experiments.run_experiment(_small()).records)
    assert all(r.wall_ms >= 0 for r in experiments.run_experiment(_small(timing=True)).records)


def test_determinism_across_workers(tmp_path):
    a = emit.write_csv(experiments.run_experiment(_small(threads=1)).records, tmp_path / "a.csv")
    b = emit.write_csv(experiments.run_experiment(_small(threads=8)).records, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


# cli ------------------------------------------------------------------------

def test_cli_run(tmp_path, capsys):
    code = cli.main(["run", "--experiment", "fdr_convergence", "--m-inf", "64", "--channels", "4,8",
                     "--reps", "10:100:log", "--runs", "2", "--out", str(tmp_path), "--emit", "csv,json,svg"])
    assert code == 0
    assert (tmp_path / "fdr_convergence.csv").exists()
    assert "median=" in capsys.readouterr().out


def test_cli_config_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "fdr_convergence", "m_inf": 64, "channels": [4], "reps_grid": [10],
                                "runs": 2, "out": str(tmp_path / "o")}))
    assert cli.main(["run", "--config", str(path), "--seed", "3"]) == 0
    assert (tmp_path / "o" / "fdr_convergence.csv").exists()


def test_cli_errors_and_strict(tmp_path, capsys):
    assert cli.main(["run", "--channels", "7"]) == 1
    assert "error" in capsys.readouterr().err
    # zero-noise Tikhonov never reaches a zero residual: every run is flagged
    code = cli.main(["run", "--m-inf", "64", "--channels", "4", "--reps", "10", "--runs", "1", "--noise", "gauss:0",
                     "--k-max", "5", "--out", str(tmp_path), "--strict"])
    assert code in (1, 2)


def test_cli_problems_and_selftest(capsys):
    assert cli.main(["problems", "list"]) == 0
    assert "phillips" in capsys.readouterr().out
    assert cli.main(["selftest"]) == 0
    assert capsys.readouterr().out.count("PASS") == 8
