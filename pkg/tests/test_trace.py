"""Workload generation, ingestion, and preprocessing pipeline tests."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudalloc import trace
from cloudalloc.trace import (
    COLUMNS,
    MetricSeries,
    TraceError,
    TraceFrame,
    WorkloadSpec,
    clean_outliers_3sigma,
    generate_workload,
    ingest_csv,
    make_windows,
    minmax_fit_transform,
    minmax_inverse_transform,
    preprocess,
    resample_and_impute,
    split_train_test,
    write_csv,
)


def _frame_from_column(values, name="cpu_util"):
    data = np.zeros((len(values), len(COLUMNS)))
    data[:, COLUMNS.index(name)] = values
    return TraceFrame(0, 300, data)


# --- generation ---------------------------------------------------------


def test_zero_variation_spec_yields_constant_cpu():
    spec = WorkloadSpec(
        duration_ticks=288, base_level=0.45, daily_amplitude=0.0,
        noise_sigma=0.0, burst_probability=0.0,
    )
    frame = generate_workload(spec)
    assert np.allclose(frame.column("cpu_util"), 0.45)


def test_tidal_calibration_mean_peak_trough():
    # 30 days at defaults: average mid-40s, peaks >= 0.80, troughs <= 0.30
    frame = generate_workload(WorkloadSpec(duration_ticks=8640, seed=7))
    cpu = frame.column("cpu_util")
    assert 0.40 <= cpu.mean() <= 0.50
    assert cpu.max() >= 0.80
    assert cpu.min() <= 0.30


def test_generation_deterministic_per_seed():
    spec_a = WorkloadSpec(duration_ticks=288, seed=7)
    spec_b = WorkloadSpec(duration_ticks=288, seed=7)
    spec_c = WorkloadSpec(duration_ticks=288, seed=8)
    assert np.array_equal(generate_workload(spec_a).data, generate_workload(spec_b).data)
    assert not np.array_equal(generate_workload(spec_a).data, generate_workload(spec_c).data)


def test_zero_duration_rejected():
    with pytest.raises(TraceError):
        generate_workload(WorkloadSpec(duration_ticks=0))


def test_frame_has_14_columns_and_daily_cycle():
    frame = generate_workload(WorkloadSpec(duration_ticks=576, seed=1, noise_sigma=0.0, burst_probability=0.0))
    assert frame.data.shape == (576, 14)
    # the two days are identical without noise
    assert np.allclose(frame.column("cpu_util")[:288], frame.column("cpu_util")[288:])


# --- CSV round trip -----------------------------------------------------


def test_csv_round_trip_three_rows(tmp_path):
    frame = generate_workload(WorkloadSpec(duration_ticks=3, seed=2))
    path = tmp_path / "t.csv"
    write_csv(frame, path)
    back = ingest_csv(path)
    assert back.n_ticks == 3
    assert np.array_equal(back.data, frame.data)
    assert back.tick_interval == frame.tick_interval


def test_csv_round_trip_byte_identical(tmp_path):
    frame = generate_workload(WorkloadSpec(duration_ticks=50, seed=3))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(frame, p1)
    write_csv(ingest_csv(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_ingest_decreasing_timestamp_names_line(tmp_path):
    frame = generate_workload(WorkloadSpec(duration_ticks=5, seed=0))
    path = tmp_path / "bad.csv"
    write_csv(frame, path)
    lines = path.read_text().splitlines()
    parts = lines[4].split(",")  # file line 5
    parts[0] = "0"
    lines[4] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError, match="line 5"):
        ingest_csv(path)


def test_ingest_rejects_bad_header_and_field_count(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope\n")
    with pytest.raises(TraceError, match="line 1"):
        ingest_csv(path)
    path.write_text(trace.CSV_HEADER + "\n1,2,3\n")
    with pytest.raises(TraceError, match="line 2"):
        ingest_csv(path)


def test_ingest_rejects_non_uniform_spacing(tmp_path):
    frame = generate_workload(WorkloadSpec(duration_ticks=4, seed=0))
    path = tmp_path / "bad.csv"
    write_csv(frame, path)
    lines = path.read_text().splitlines()
    parts = lines[3].split(",")
    parts[0] = str(int(parts[0]) + 7)
    lines[3] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceError, match="spacing"):
        ingest_csv(path)


# --- 3-sigma cleaning ---------------------------------------------------


def test_clean_constant_series_untouched():
    s = MetricSeries("m", [0, 300, 600, 900], [5.0, 5.0, 5.0, 5.0])
    out, removed = clean_outliers_3sigma(s)
    assert removed == 0
    assert np.array_equal(out.values, s.values)


def test_clean_removes_single_gross_outlier():
    vals = [0.0] * 100 + [10.0]
    ts = np.arange(101) * 300
    out, removed = clean_outliers_3sigma(MetricSeries("m", ts, vals))
    assert removed == 1
    assert 10.0 not in out.values
    assert len(out) == 100


def test_clean_gaussian_matches_exhaustive_oracle():
    rng = np.random.default_rng(12)
    vals = rng.normal(0.0, 1.0, 10_000)
    ts = np.arange(10_000) * 300
    out, removed = clean_outliers_3sigma(MetricSeries("m", ts, vals))
    mean, sigma = vals.mean(), vals.std()
    oracle = int((np.abs(vals - mean) > 3 * sigma).sum())
    assert removed == oracle
    assert 0.0 <= removed / len(vals) <= 0.01


def test_clean_empty_series_rejected():
    with pytest.raises(TraceError):
        clean_outliers_3sigma(MetricSeries("m", [], []))


# --- resample + imputation ---------------------------------------------


def test_resample_identity_on_uniform_series():
    ts = np.arange(6) * 300
    vals = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    out = resample_and_impute(MetricSeries("m", ts, vals), 300)
    assert np.array_equal(out.values, vals)
    assert np.array_equal(out.timestamps, ts)


def test_resample_fills_gap_with_running_ema():
    # EMA after 1 is 1.0; after 2 is 0.5*2 + 0.5*1 = 1.5; the gap takes 1.5
    s = MetricSeries("m", [0, 300], [1.0, 2.0])
    out = resample_and_impute(s, 300, alpha=0.5, start=0, n_points=3)
    assert out.values.tolist() == [1.0, 2.0, 1.5]


def test_resample_backfills_leading_gap_with_first_value():
    s = MetricSeries("m", [600, 900], [4.0, 8.0])
    out = resample_and_impute(s, 300, start=0, n_points=4)
    assert out.values.tolist() == [4.0, 4.0, 4.0, 8.0]


def test_resample_every_grid_point_populated():
    rng = np.random.default_rng(4)
    ts = np.arange(200) * 300
    keep = rng.random(200) >= 0.3
    out = resample_and_impute(
        MetricSeries("m", ts[keep], rng.random(int(keep.sum()))), 300, start=0, n_points=200
    )
    assert len(out) == 200
    assert np.all(np.isfinite(out.values))


def test_resample_rejects_bad_inputs():
    s = MetricSeries("m", [0], [1.0])
    with pytest.raises(TraceError):
        resample_and_impute(s, 0)
    with pytest.raises(TraceError):
        resample_and_impute(s, 300, alpha=0.0)


# --- min-max normalization ----------------------------------------------


def test_minmax_maps_column_to_unit_interval():
    frame = _frame_from_column([2.0, 4.0, 6.0])
    out, _ = minmax_fit_transform(frame)
    assert out.column("cpu_util").tolist() == [0.0, 0.5, 1.0]


def test_minmax_identity_range_unchanged():
    frame = _frame_from_column([0.0, 1.0])
    out, _ = minmax_fit_transform(frame)
    assert out.column("cpu_util").tolist() == [0.0, 1.0]


def test_minmax_constant_column_maps_to_zero():
    frame = _frame_from_column([3.0, 3.0, 3.0])
    out, _ = minmax_fit_transform(frame)
    assert out.column("cpu_util").tolist() == [0.0, 0.0, 0.0]


def test_minmax_inverse_round_trip():
    frame = generate_workload(WorkloadSpec(duration_ticks=100, seed=5))
    out, params = minmax_fit_transform(frame)
    back = minmax_inverse_transform(out, params)
    assert np.allclose(back.data, frame.data, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=40))
def test_minmax_bounds_property(values):
    out, _ = minmax_fit_transform(_frame_from_column(values))
    assert out.data.min() >= 0.0
    assert out.data.max() <= 1.0


# --- windows and split --------------------------------------------------


def test_window_counts():
    frame = generate_workload(WorkloadSpec(duration_ticks=85, seed=0))
    assert len(make_windows(frame, 72, 12)) == 2  # 85 - 72 - 12 + 1
    frame = generate_workload(WorkloadSpec(duration_ticks=100, seed=0))
    assert len(make_windows(frame, 72, 12)) == 17


def test_window_contiguity():
    frame = generate_workload(WorkloadSpec(duration_ticks=90, seed=1))
    ds = make_windows(frame, 72, 12)
    assert np.array_equal(ds.inputs[0], frame.data[0:72])
    assert np.array_equal(ds.targets[0], frame.column("cpu_util")[72:84])


def test_window_too_short_frame_rejected():
    frame = generate_workload(WorkloadSpec(duration_ticks=50, seed=0))
    with pytest.raises(TraceError):
        make_windows(frame, 72, 12)


def test_split_ratios():
    frame = generate_workload(WorkloadSpec(duration_ticks=93, seed=0))
    ds = make_windows(frame, 72, 12)  # 10 windows
    train, test = split_train_test(ds, 0.8)
    assert (len(train), len(test)) == (8, 2)
    train, test = split_train_test(ds, 0.5)
    assert (len(train), len(test)) == (5, 5)


def test_split_is_chronological():
    frame = generate_workload(WorkloadSpec(duration_ticks=93, seed=0))
    ds = make_windows(frame, 72, 12)
    train, test = split_train_test(ds, 0.8)
    assert np.array_equal(train.inputs[-1], ds.inputs[7])
    assert np.array_equal(test.inputs[0], ds.inputs[8])


def test_split_empty_side_rejected():
    frame = generate_workload(WorkloadSpec(duration_ticks=93, seed=0))
    ds = make_windows(frame, 72, 12)
    with pytest.raises(TraceError):
        split_train_test(ds, 0.05)
    with pytest.raises(TraceError):
        split_train_test(ds, 1.2)


# --- full pipeline ------------------------------------------------------


def test_preprocess_output_normalized_and_counted():
    frame = generate_workload(WorkloadSpec(duration_ticks=1440, seed=9))
    out, params, removed = preprocess(frame)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    assert set(removed) == set(COLUMNS)
    assert out.n_ticks == frame.n_ticks


def test_pipeline_idempotent_on_bounded_trace():
    # a noise-free tide has no 3-sigma tails, so a second pass is a no-op
    spec = WorkloadSpec(duration_ticks=1440, seed=9, noise_sigma=0.0, burst_probability=0.0)
    frame = generate_workload(spec)
    once, _, _ = preprocess(frame)
    twice, _, removed = preprocess(once)
    assert sum(removed.values()) == 0
    assert np.allclose(once.data, twice.data, atol=1e-12)
