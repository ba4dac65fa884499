"""Evaluation report tests: percentiles, SLA, costs, comparisons, warnings."""
import json
import random

import numpy as np
import pytest

from cloudalloc import simenv, trace
from cloudalloc.agent_actions import NOOP
from cloudalloc.report import (
    CostRates,
    ReportError,
    RunReport,
    build_run_report,
    coefficient_of_variation,
    compare_runs,
    cost_of_run,
    early_warning_hit_rate,
    emit_report,
    percentile,
    savings_rate,
    sla_rate,
    threshold_crossing_events,
)
from cloudalloc.simenv import EpisodeTrace
from cloudalloc.trace import COLUMNS, MetricSeries, TraceFrame, WorkloadSpec, generate_workload


def _episode(n=60, seed=0):
    frame = generate_workload(WorkloadSpec(duration_ticks=n, seed=seed))
    norm, _, _ = trace.preprocess(frame)
    return simenv.run_episode(norm, lambda ctx: NOOP, cfg=simenv.EnvConfig(n_nodes=4, initial_vms=8))


def _hand_trace():
    """3-tick run with unit-friendly numbers for cost arithmetic."""
    out = _episode(3)
    out.active_capacity = [2.0, 3.0, 4.0]
    out.served = [1.0, 1.0, 2.0]
    out.storage_util = [0.5, 0.5, 0.5]
    return out


# --- percentile -----------------------------------------------------------


def test_percentile_nearest_rank_on_1000_points():
    vals = list(range(1, 1001))
    assert percentile(vals, 0.99) == 990
    assert percentile(vals, 0.50) == 500
    assert percentile(vals, 1.0) == 1000


def test_percentile_singleton():
    assert percentile([7.0], 0.5) == 7.0
    assert percentile([7.0], 0.999) == 7.0


def test_percentile_order_invariant():
    vals = list(range(1, 101))
    shuffled = vals[:]
    random.Random(3).shuffle(shuffled)
    for p in (0.1, 0.5, 0.95, 0.99):
        assert percentile(shuffled, p) == percentile(vals, p)


def test_percentile_monotone_in_p():
    vals = np.random.default_rng(0).random(500).tolist()
    ps = [0.01, 0.1, 0.5, 0.9, 0.99, 0.999, 1.0]
    out = [percentile(vals, p) for p in ps]
    assert all(a <= b for a, b in zip(out, out[1:]))


def test_percentile_rejects_bad_inputs():
    with pytest.raises(ReportError):
        percentile([], 0.5)
    with pytest.raises(ReportError):
        percentile([1.0], 0.0)
    with pytest.raises(ReportError):
        percentile([1.0], 1.5)


# --- SLA rate ---------------------------------------------------------------


def test_sla_all_within_bound():
    assert sla_rate([10.0, 20.0, 30.0], 30.0) == 1.0


def test_sla_one_in_a_thousand():
    lats = [50.0] * 999 + [500.0]
    assert sla_rate(lats, 200.0) == pytest.approx(0.999)


def test_sla_zero_bound_all_violations():
    assert sla_rate([1.0, 2.0], 0.0) == 0.0


def test_sla_empty_rejected():
    with pytest.raises(ReportError):
        sla_rate([], 100.0)


# --- costs -------------------------------------------------------------------


def test_cost_zero_rates_only_labor():
    cost = cost_of_run(_hand_trace(), CostRates(0.0, 0.0, 0.0, 5.0))
    assert cost.server == cost.bandwidth == cost.storage == 0.0
    assert cost.total == 5.0


def test_cost_hand_arithmetic_unit_rates():
    cost = cost_of_run(_hand_trace(), CostRates(1.0, 1.0, 1.0, 2.0))
    assert cost.server == pytest.approx(9.0)  # capacity 2+3+4
    assert cost.bandwidth == pytest.approx(4.0)  # served 1+1+2
    assert cost.storage == pytest.approx(1.5)  # 0.5*3
    assert cost.total == pytest.approx(16.5)


def test_cost_linear_in_server_rate():
    t = _hand_trace()
    a = cost_of_run(t, CostRates(0.01, 0.0, 0.0, 0.0)).server
    b = cost_of_run(t, CostRates(0.02, 0.0, 0.0, 0.0)).server
    assert b == pytest.approx(2.0 * a)


def test_cost_rates_validated():
    with pytest.raises(ReportError):
        CostRates(server_rate=-0.01)


# --- savings ------------------------------------------------------------------


def test_savings_rate_published_rows():
    assert savings_rate(188.0, 138.0) == 26.6
    assert savings_rate(85.0, 57.0) == 32.9


def test_savings_rate_equal_costs_zero():
    assert savings_rate(40.0, 40.0) == 0.0


def test_savings_rate_requires_positive_before():
    with pytest.raises(ReportError):
        savings_rate(0.0, 10.0)


# --- coefficient of variation ---------------------------------------------------


def test_cov_matches_two_pass_oracle():
    vals = np.random.default_rng(2).gamma(2.0, 10.0, 400)
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    assert coefficient_of_variation(vals) == pytest.approx(var**0.5 / mean, abs=1e-12)


def test_cov_zero_mean_rejected():
    with pytest.raises(ReportError):
        coefficient_of_variation([-1.0, 1.0])


# --- run reports and comparison --------------------------------------------------


def test_report_dict_round_trip():
    rep = build_run_report(_episode(), policy="static", seed=0)
    doc = rep.to_dict()
    assert doc["format_version"] == "1"
    back = RunReport.from_dict(doc)
    assert back.to_dict() == doc


def test_report_on_empty_episode_rejected():
    empty = simenv.run_episode(TraceFrame(0, 300, np.zeros((0, len(COLUMNS)))), lambda c: NOOP)
    with pytest.raises(ReportError):
        build_run_report(empty)


def test_compare_identical_runs_all_zero_change():
    rep = build_run_report(_episode(), policy="static")
    comp = compare_runs(rep, rep)
    for _, (_, _, change) in comp.metrics.items():
        assert change == 0.0


def test_compare_hand_values():
    base = build_run_report(_episode(), policy="a")
    cand = build_run_report(_episode(), policy="b")
    base.mean_latency, cand.mean_latency = 150.0, 85.0
    base.avg_cpu_util, cand.avg_cpu_util = 0.45, 0.78
    comp = compare_runs(base, cand).metrics
    assert comp["mean_latency"][2] == pytest.approx(-43.333, abs=1e-3)
    assert comp["avg_cpu_util"][2] == pytest.approx(73.333, abs=1e-3)


def test_compare_antisymmetry_identity():
    # (b->c change) and (c->b change) satisfy delta_bc = -delta_cb * (c/b)
    b = build_run_report(_episode(60, seed=1), policy="a")
    c = build_run_report(_episode(60, seed=2), policy="b")
    fwd = compare_runs(b, c).metrics
    rev = compare_runs(c, b).metrics
    for name in fwd:
        b_val, c_val, d_fwd = fwd[name]
        _, _, d_rev = rev[name]
        assert d_fwd == pytest.approx(-d_rev * (c_val / b_val), rel=1e-12)


def test_compare_rejects_mismatched_lengths():
    with pytest.raises(ReportError, match="not comparable"):
        compare_runs(build_run_report(_episode(60)), build_run_report(_episode(50)))


# --- threshold crossings and early warning ------------------------------------------


def _series(vals):
    return MetricSeries("m", np.arange(len(vals)) * 300, np.asarray(vals, dtype=float))


def test_crossings_constant_series_none():
    assert threshold_crossing_events(_series([0.5] * 10), 0.85) == []


def test_crossings_single_upward_event():
    assert threshold_crossing_events(_series([0.8, 0.9]), 0.85) == [(1, 0.9)]


def test_crossings_ignore_downward_and_repeat_highs():
    events = threshold_crossing_events(_series([0.9, 0.95, 0.5, 0.9, 0.9]), 0.85)
    assert events == [(3, 0.9)]


def test_early_warning_perfect_foresight_hits_everything():
    rng = np.random.default_rng(7)
    vals = np.clip(0.6 + 0.3 * np.sin(np.arange(300) / 9.0) + rng.normal(0, 0.05, 300), 0, 1)
    lead = 3
    actual = _series(vals)
    forecast = _series(np.concatenate([vals[lead:], np.zeros(lead)]))
    assert threshold_crossing_events(actual, 0.85)  # the case is non-trivial
    assert early_warning_hit_rate(actual, forecast, 0.85, lead) == 1.0


def test_early_warning_blind_forecast_misses_everything():
    actual = _series([0.5, 0.9, 0.5, 0.9])
    forecast = _series([0.0, 0.0, 0.0, 0.0])
    assert early_warning_hit_rate(actual, forecast, 0.85, 1) == 0.0


def test_early_warning_no_events_is_vacuously_one():
    quiet = _series([0.1] * 20)
    assert early_warning_hit_rate(quiet, quiet, 0.85, 3) == 1.0


# --- artifact emission -----------------------------------------------------------


def test_emit_report_writes_all_artifacts(tmp_path):
    episode = _episode()
    rep = build_run_report(episode, policy="static", seed=0)
    json_path = emit_report(rep, tmp_path, episode)
    assert json_path.name == "report.json"
    back = RunReport.from_dict(json.loads(json_path.read_text()))
    assert back.to_dict() == rep.to_dict()
    for name in (
        "utilization_over_time.csv",
        "latency_histogram.csv",
        "utilization_over_time.png",
        "latency_histogram.png",
    ):
        assert (tmp_path / name).stat().st_size > 0


def test_emit_histogram_counts_sum_to_ticks(tmp_path):
    episode = _episode(80)
    emit_report(build_run_report(episode), tmp_path, episode)
    lines = (tmp_path / "latency_histogram.csv").read_text().splitlines()
    assert lines[0] == "bin_left_ms,bin_right_ms,count"
    assert sum(int(line.split(",")[2]) for line in lines[1:]) == 80
    assert len(lines) == 51


def test_emit_without_trace_writes_only_json(tmp_path):
    emit_report(build_run_report(_episode()), tmp_path)
    assert (tmp_path / "report.json").exists()
    assert not (tmp_path / "latency_histogram.csv").exists()
