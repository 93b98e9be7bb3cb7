import csv
import json
import math
import os

import numpy as np
import pytest

from xlpol import harness
from xlpol.harness import (ARMS, BranchPowers, CsvStream, SweepSpec, aggregate, arm_metrics,
                           complexity_benchmark, emit_results, figure_data, loglog_slope, read_csv_records,
                           run_sweep, run_trial, single_target_map, spurious_peaks)
from xlpol.metrics import pd_analytic, ser_with_as
from xlpol.scenario import ArrayConfig, ScenarioConfig
from xlpol.selection import SelectionResult
from xlpol.waveforms import find_peaks_2d


def _small(n=32, trials=3):
    return ScenarioConfig(array=ArrayConfig(n_elements=n), trials=trials, seed=5)


def _spec(**kw):
    base = dict(scenario=_small(), sweep_axis="snr", axis_values=(0.0, 10.0), arms=("proposed_as", "all_on"))
    base.update(kw)
    return SweepSpec(**base)


def _strip_wall(text):
    rows = [ln for ln in text.splitlines()]
    head = [ln for ln in rows if ln.startswith("#")]
    body = list(csv.reader([ln for ln in rows if not ln.startswith("#")]))
    i = body[0].index("wall_time")
    return head, [r[:i] + r[i + 1:] for r in body]


# -- spec ---------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(_small(), "snr", (10.0, 0.0))
    with pytest.raises(ValueError):
        SweepSpec(_small(), "snr", (0.0,), arms=())
    with pytest.raises(ValueError):
        SweepSpec(_small(), "snr", (0.0,), arms=("magic",))
    with pytest.raises(ValueError):
        SweepSpec(_small(), "distance", (1.0,))
    with pytest.raises(ValueError):
        SweepSpec(_small(), "chi", ())
    spec = SweepSpec(_small())
    assert spec.axis_values == tuple(_small().snr_grid_db)
    assert spec.trials == 3


def test_two_trials_distinct_streams():
    spec = SweepSpec(_small(trials=2), "snr", (10.0,), ("proposed_as",))
    recs = run_sweep(spec)
    assert len(recs) == 2
    assert [r.trial for r in recs] == [0, 1]
    assert recs[0].report.sinr_db != recs[1].report.sinr_db


def test_records_order_and_count():
    spec = _spec()
    recs = run_sweep(spec)
    assert len(recs) == 2 * 2 * 3
    keys = [(spec.axis_values.index(r.axis_value), ARMS.index(r.arm), r.trial) for r in recs]
    assert keys == sorted(keys)


def test_determinism_byte_identical_csv(tmp_path):
    spec = _spec()
    texts = []
    for i in range(2):
        out = tmp_path / str(i)
        emit_results(run_sweep(spec), "csv", str(out), spec.resolved())
        texts.append(_strip_wall((out / "records.csv").read_text()))
    assert texts[0] == texts[1]


def test_workers_match_serial():
    spec = _spec()
    a = [r.row() for r in run_sweep(spec)]
    b = [r.row() for r in run_sweep(_spec(workers=2))]
    for ra, rb in zip(a, b):
        ra.pop("wall_time"), rb.pop("wall_time")
    assert json.dumps(a, default=str) == json.dumps(b, default=str)


def test_common_random_numbers_across_arms():
    recs = run_trial(_spec(arms=("proposed_as", "no_mitigation")), 0)
    prop = [r for r in recs if r.arm == "proposed_as" and r.axis_value == 10.0][0]
    nomit = [r for r in recs if r.arm == "no_mitigation" and r.axis_value == 10.0][0]
    # same selection, only the residual differs
    assert prop.selection == nomit.selection


def test_error_is_tagged_not_raised(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("synthetic failure")
    monkeypatch.setattr(harness, "arm_metrics", boom)
    recs = run_sweep(_spec())
    assert all("synthetic failure" in r.error for r in recs)
    agg = aggregate(recs)
    assert all(g["n_errors"] == g["n"] for g in agg)


def test_axes():
    for axis, values in (("pol_shift", (0.0, 0.5)), ("n_elements", (16, 32)), ("chi", (0.0, 0.4))):
        recs = run_sweep(SweepSpec(_small(trials=1), axis, values, ("proposed_as",)))
        assert [r.axis_value for r in recs] == list(values)
        assert not any(r.error for r in recs)


def test_default_trend_se_at_20db():
    spec = SweepSpec(ScenarioConfig(trials=60), "snr", (20.0,), ("proposed_as", "all_on"))
    agg = {g["arm"]: g for g in aggregate(run_sweep(spec))}
    assert agg["proposed_as"]["se_mean"] > agg["all_on"]["se_mean"]


# -- arm metrics --------------------------------------------------------------------

def test_arm_metrics_hand_values():
    pw = BranchPowers(s=np.array([4.0, 1.0, 0.0]), i=np.array([1.0, 1.0, 0.0]),
                      v=np.array([0.0, 0.0, 9.0]), j=np.array([0.0, 0.0, 1.0]))
    sel = SelectionResult.from_roles([1, 1, 2])
    rep = arm_metrics(sel, pw, 0.5, 0.1, 1e-2)
    sinr = 5.0 / (0.01 * 2 + 2 * 0.5)
    assert rep.se == pytest.approx(math.log2(1 + sinr))
    assert rep.chi_as == pytest.approx(0.02 / 5)
    assert rep.ser_analytic == pytest.approx(ser_with_as(5.0 / 1.0, 0.02 / 5))
    assert rep.p1_objective == pytest.approx(math.log2(1 + 4 / 0.51) + math.log2(1 + 1 / 0.51))
    rs = 9.0 / (0.01 + 0.5)
    assert rep.radar_sinr_db == pytest.approx(10 * math.log10(rs))
    assert rep.pd_analytic == pytest.approx(pd_analytic(rs, 1e-2))


def test_arm_metrics_empty_roles():
    pw = BranchPowers(*(np.ones(2) for _ in range(4)))
    rep = arm_metrics(SelectionResult.from_roles([0, 0]), pw, 1.0, 1.0, 1e-3)
    assert rep.p1_objective == 0.0
    assert all(math.isnan(v) for v in (rep.se, rep.sinr_db, rep.ser_analytic, rep.pd_analytic, rep.radar_sinr_db))


def test_aggregate_counts_outages():
    spec = SweepSpec(_small(trials=1), "snr", (10.0,), ("proposed_as",))
    rec = run_sweep(spec)[0]
    empty = harness.TrialRecord(1, "proposed_as", "snr", 10.0, 5, arm_metrics(
        SelectionResult.from_roles([0] * 32), BranchPowers(*(np.ones(32) for _ in range(4))), 1.0, 1.0, 1e-2),
        {"n_comm": 0, "n_sense": 0, "n_discarded": 32, "feasible": False}, 0.0)
    g = aggregate([rec, empty])[0]
    assert g["comm_outages"] == 1 and g["n"] == 2
    assert g["se_mean"] == pytest.approx(rec.report.se)


# -- persistence --------------------------------------------------------------------

def test_empty_records_header_only(tmp_path):
    paths = emit_results([], "both", str(tmp_path), {"a": 1})
    text = (tmp_path / "records.csv").read_text().splitlines()
    assert text[0].startswith("# xlpol") and text[1].startswith("# config:")
    assert len(text) == 3 and text[2].split(",")[0] == "trial"
    assert json.loads((tmp_path / "records.json").read_text())["records"] == []
    assert len(paths) == 4


def test_aggregate_matches_hand_mean(tmp_path):
    recs = run_sweep(_spec())
    emit_results(recs, "csv", str(tmp_path))
    raw = read_csv_records(str(tmp_path / "records.csv"))
    agg = read_csv_records(str(tmp_path / "records_aggregate.csv"))
    for g in agg:
        vals = [float(r["se"]) for r in raw if r["arm"] == g["arm"] and r["axis_value"] == g["axis_value"]
                and not r["error"]]
        vals = [v for v in vals if math.isfinite(v)]
        assert float(g["se_mean"]) == pytest.approx(sum(vals) / len(vals), rel=1e-12)


def test_json_csv_consistent(tmp_path):
    recs = run_sweep(_spec())
    emit_results(recs, "both", str(tmp_path), {"x": 1})
    raw = read_csv_records(str(tmp_path / "records.csv"))
    js = json.loads((tmp_path / "records.json").read_text())
    assert js["config"] == {"x": 1}
    for r, j in zip(raw, js["records"]):
        for c in harness.METRIC_COLUMNS:
            jv = j[c]
            jv = float("nan") if jv is None else float(jv)
            cv = float(r[c])
            assert (math.isnan(cv) and math.isnan(jv)) or cv == jv


def test_aggregate_order_invariant():
    recs = run_sweep(_spec())
    a = aggregate(recs)
    b = aggregate(list(reversed(recs)))
    assert json.dumps(a) == json.dumps(b)


def test_csv_stream_and_bad_path(tmp_path):
    s = CsvStream(str(tmp_path / "p.csv"), {})
    s.write(run_trial(_spec(), 0))
    s.close()
    assert len(read_csv_records(str(tmp_path / "p.csv"))) == 4
    with pytest.raises(OSError) as err:
        emit_results([], "csv", str(tmp_path / "p.csv" / "sub"))
    assert "p.csv" in str(err.value)
    with pytest.raises(ValueError):
        emit_results([], "xml", str(tmp_path))


# -- complexity ---------------------------------------------------------------------

def test_benchmark_minimal():
    row = complexity_benchmark([1])[0]
    assert row["n"] == 1 and row["measured_comparisons"] > 0
    with pytest.raises(ValueError):
        complexity_benchmark([])


def test_benchmark_doubling_ratio():
    rows = complexity_benchmark([256, 512, 1024, 2048])
    c = [r["measured_comparisons"] for r in rows]
    assert all(b / a <= 2.4 for a, b in zip(c, c[1:]))
    n = np.array([r["n"] for r in rows], float)
    assert loglog_slope(n * np.log(n), c) == pytest.approx(1.0, abs=0.15)


def test_benchmark_ga_factor():
    row = complexity_benchmark([256], k_grid=[8])[0]
    assert row["model_ga"] >= 64 / math.log(256) * row["model_proposed"]
    assert set(k for k in row if k.startswith("model_")) >= {"model_hrnp", "model_ls", "model_ga", "model_pso"}


def test_benchmark_k_and_l():
    rows = complexity_benchmark([64], k_grid=[1, 2], l_grid=[1, 4])
    assert len(rows) == 4
    by = {(r["k"], r["l"]): r for r in rows}
    assert by[(2, 1)]["measured_comparisons"] > by[(1, 1)]["measured_comparisons"]


# -- figures ------------------------------------------------------------------------

def test_figure_unknown_kind():
    with pytest.raises(ValueError):
        figure_data("spectrogram")


def test_pol_heatmap_near_field_fluctuation(tmp_path):
    d = figure_data("pol_heatmap", SweepSpec(ScenarioConfig()), str(tmp_path))
    assert d["angle_by_distance"].shape == (100, 256)
    v = d["variance_by_distance"]
    near = d["distances"] < 30
    assert v[near].mean() > v[~near].mean()
    assert os.path.exists(d["files"]["by_distance"]) and os.path.exists(d["files"]["by_aoa"])


def test_power_imbalance_alternates(tmp_path):
    d = figure_data("power_imbalance", SweepSpec(ScenarioConfig()), str(tmp_path))
    m = (d["p_h"] + d["p_v"]) > 0
    sign = np.sign(d["p_h"] - d["p_v"])[m]
    assert (sign > 0).any() and (sign < 0).any()
    assert np.count_nonzero(np.diff(sign)) >= 2
    assert read_csv_records(d["files"]["table"])[0]["antenna"] == "1"


def test_single_target_single_peak():
    amp = single_target_map()
    peaks = find_peaks_2d(amp, -20.0)
    assert len(peaks) == 1
    assert spurious_peaks(amp) == []


def test_ddmap_figure_files(tmp_path):
    d = figure_data("ddmap", SweepSpec(ScenarioConfig()), str(tmp_path), trial=0)
    assert d["no_as"].shape == d["with_as"].shape
    text = open(d["files"]["no_as"]).read().splitlines()
    assert text[0].startswith("# xlpol")


def test_sweep_figures(tmp_path):
    spec = SweepSpec(_small(trials=2), "snr", (0.0, 20.0), ("proposed_as", "all_on"))
    for kind in ("sinr_vs_snr", "se", "ser", "pd"):
        d = figure_data(kind, spec, str(tmp_path))
        assert len(d["mean"]["proposed_as"]) == 2
        assert os.path.exists(d["files"]["table"])
    with pytest.raises(ValueError):
        figure_data("se", SweepSpec(_small(trials=1), "chi", (0.1,)))
    roc = figure_data("roc", spec, str(tmp_path), snr_db=10.0)
    assert set(roc["curves"]) == {"proposed_as", "all_on"}
    assert all(np.all(np.diff(c) >= 0) for c in roc["curves"].values())


def test_dump_trial_channel():
    text = harness.dump_trial_channel(_small(n=4), 0)
    assert len(text.strip().splitlines()) == 5
