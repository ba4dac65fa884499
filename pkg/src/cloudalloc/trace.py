"""Synthetic tidal workload generation and preprocessing.

The pipeline mirrors a production monitoring flow: generate (or ingest) a
14-metric trace on a 5-minute grid, strip outliers with a 3-sigma filter,
resample onto a uniform grid with EMA imputation of gaps, min-max normalize,
and cut sliding windows for the forecaster.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Canonical column order, matching the trace CSV header.
COLUMNS = (
    "cpu_util",
    "mem_util",
    "storage_util",
    "disk_read_iops",
    "disk_write_iops",
    "net_in",
    "net_out",
    "request_rate",
    "active_connections",
    "error_rate",
    "queue_depth",
    "p99_latency",
    "hour_sin",
    "hour_cos",
)

CSV_HEADER = "timestamp," + ",".join(COLUMNS)

DEFAULT_TICK_INTERVAL = 300  # seconds


class TraceError(ValueError):
    """Raised for malformed traces or invalid preprocessing inputs."""


@dataclass
class MetricSeries:
    """One named metric sampled at strictly increasing epoch-second timestamps."""

    name: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.timestamps.shape != self.values.shape:
            raise TraceError(
                f"{self.name}: {len(self.timestamps)} timestamps vs {len(self.values)} values"
            )
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise TraceError(f"{self.name}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class TraceFrame:
    """14 metric columns on one uniform timestamp grid."""

    start_time: int
    tick_interval: int
    data: np.ndarray  # shape (n_ticks, 14), column order == COLUMNS

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise TraceError(f"expected (n, {len(COLUMNS)}) data, got {self.data.shape}")
        if self.tick_interval <= 0:
            raise TraceError("tick_interval must be positive")

    @property
    def n_ticks(self) -> int:
        return self.data.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_ticks, dtype=np.int64) * self.tick_interval

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    def series(self, name: str) -> MetricSeries:
        return MetricSeries(name, self.timestamps, self.column(name).copy())


@dataclass
class WorkloadSpec:
    """Shape parameters for a synthetic tidal workload."""

    duration_ticks: int
    base_level: float = 0.45
    daily_amplitude: float = 0.40
    peak_hours: tuple = (10, 14, 20)
    peak_width_hours: float = 1.1
    noise_sigma: float = 0.02
    burst_probability: float = 0.01
    burst_magnitude: float = 0.15
    seed: int = 0
    tick_interval: int = DEFAULT_TICK_INTERVAL
    start_time: int = 0

    def __post_init__(self):
        if not 0.0 <= self.burst_probability <= 1.0:
            raise TraceError("burst_probability must be in [0, 1]")
        if self.duration_ticks < 0:
            raise TraceError("duration_ticks must be non-negative")


@dataclass
class ScalerParams:
    """Per-column min/max recorded by minmax_fit_transform."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=float)
        self.maxs = np.asarray(self.maxs, dtype=float)
        if np.any(self.maxs < self.mins):
            raise TraceError("scaler max < min")

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScalerParams":
        return cls(np.asarray(doc["mins"]), np.asarray(doc["maxs"]))


@dataclass
class WindowedDataset:
    """Sliding windows (inputs) with horizon-length targets for one metric."""

    inputs: np.ndarray  # (n_windows, window_len, 14)
    targets: np.ndarray  # (n_windows, horizon)
    window_len: int
    horizon: int
    target_metric: str = "cpu_util"

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _tide_shape(hours: np.ndarray, peak_hours, width: float) -> np.ndarray:
    """Diurnal bump in [-0.5, 1]: max 1 at the peak hours, trough -0.5.

    Gaussian bumps (circular in hour-of-day) around each peak hour, rescaled
    so peaks rise by the full amplitude while the overnight trough sits half
    an amplitude below base -- idle tidal systems hover around a quarter of
    peak load rather than falling to nothing. With the default peak width the
    time-weighted day average stays close to base_level.
    """
    raw = np.zeros_like(hours)
    for peak in peak_hours:
        dist = np.abs(hours - peak)
        dist = np.minimum(dist, 24.0 - dist)
        raw = np.maximum(raw, np.exp(-0.5 * (dist / width) ** 2))
    # analytic day grid keeps the scaling independent of trace length
    grid = np.arange(0.0, 24.0, 1.0 / 60.0)
    ref = np.zeros_like(grid)
    for peak in peak_hours:
        dist = np.abs(grid - peak)
        dist = np.minimum(dist, 24.0 - dist)
        ref = np.maximum(ref, np.exp(-0.5 * (dist / width) ** 2))
    lo = float(ref.min())
    hi = float(ref.max())
    if hi - lo < 1e-12:
        return np.zeros_like(hours)
    return 1.5 * (raw - lo) / (hi - lo) - 0.5


def generate_workload(spec: WorkloadSpec) -> TraceFrame:
    """Generate a deterministic 14-column tidal workload frame."""
    if spec.duration_ticks == 0:
        raise TraceError("duration_ticks is 0: refusing to build an empty frame")
    rng = np.random.default_rng(spec.seed)
    n = spec.duration_ticks
    ts = spec.start_time + np.arange(n, dtype=np.int64) * spec.tick_interval
    hours = (ts % 86400) / 3600.0

    shape = _tide_shape(hours, spec.peak_hours, spec.peak_width_hours)
    noise = rng.normal(0.0, 1.0, size=n) * spec.noise_sigma
    bursts = (rng.random(n) < spec.burst_probability) * spec.burst_magnitude
    cpu = np.clip(spec.base_level + spec.daily_amplitude * shape + noise + bursts, 0.0, 1.0)

    jitter = rng.normal(0.0, 1.0, size=(n, 6)) * spec.noise_sigma
    mem = np.clip(0.65 + 0.15 * (cpu - spec.base_level) + 0.5 * jitter[:, 0], 0.0, 1.0)
    storage = np.clip(0.40 + 0.30 * cpu + 0.5 * jitter[:, 1], 0.0, 1.0)
    read_iops = np.maximum(5000.0 * cpu * (1.0 + jitter[:, 2]), 0.0)
    write_iops = np.maximum(3000.0 * cpu * (1.0 + jitter[:, 3]), 0.0)
    net_in = np.maximum(800.0 * cpu * (1.0 + jitter[:, 4]), 0.0)
    net_out = np.maximum(600.0 * cpu * (1.0 + jitter[:, 5]), 0.0)
    request_rate = np.maximum(2000.0 * cpu, 0.0)
    connections = np.maximum(500.0 * cpu, 0.0)
    error_rate = np.clip(0.001 + 0.004 * cpu * cpu, 0.0, 1.0)
    queue_depth = np.maximum(80.0 * np.maximum(cpu - 0.5, 0.0), 0.0)
    p99_latency = 12.4 / (1.0 - np.clip(cpu, 0.0, 0.95))
    hour_sin = np.sin(2.0 * np.pi * hours / 24.0)
    hour_cos = np.cos(2.0 * np.pi * hours / 24.0)

    data = np.column_stack(
        [
            cpu,
            mem,
            storage,
            read_iops,
            write_iops,
            net_in,
            net_out,
            request_rate,
            connections,
            error_rate,
            queue_depth,
            p99_latency,
            hour_sin,
            hour_cos,
        ]
    )
    return TraceFrame(start_time=spec.start_time, tick_interval=spec.tick_interval, data=data)


def write_csv(frame: TraceFrame, path) -> None:
    """Write a frame in the trace CSV format (shortest round-trip floats)."""
    ts = frame.timestamps
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(frame.n_ticks):
            row = ",".join(repr(float(v)) for v in frame.data[i])
            fh.write(f"{int(ts[i])},{row}\n")


def ingest_csv(path) -> TraceFrame:
    """Parse a trace CSV, rejecting malformed rows with their line numbers."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceError(f"{path}: empty file")
    if lines[0] != CSV_HEADER:
        raise TraceError(f"{path}: line 1: header does not match trace CSV format")
    timestamps = []
    rows = []
    prev_ts = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(COLUMNS) + 1:
            raise TraceError(
                f"{path}: line {lineno}: expected {len(COLUMNS) + 1} fields, got {len(parts)}"
            )
        try:
            ts = int(parts[0])
            vals = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise TraceError(f"{path}: line {lineno}: unparseable number ({exc})") from exc
        if prev_ts is not None and ts <= prev_ts:
            raise TraceError(f"{path}: line {lineno}: timestamp {ts} not increasing")
        prev_ts = ts
        timestamps.append(ts)
        rows.append(vals)
    if not rows:
        raise TraceError(f"{path}: no data rows")
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if len(timestamps) > 1:
        steps = np.diff(timestamps)
        if not np.all(steps == steps[0]):
            raise TraceError(f"{path}: non-uniform tick spacing")
        interval = int(steps[0])
    else:
        interval = DEFAULT_TICK_INTERVAL
    return TraceFrame(start_time=int(timestamps[0]), tick_interval=interval, data=np.asarray(rows))


def clean_outliers_3sigma(series: MetricSeries):
    """Drop values more than 3 population-stddevs from the mean.

    Mean and sigma are computed once over the raw input; sigma = 0 removes
    nothing. Returns the filtered series and the removal count.
    """
    if len(series) == 0:
        raise TraceError(f"{series.name}: empty series")
    mean = float(series.values.mean())
    sigma = float(series.values.std())  # population stddev
    if sigma == 0.0:
        return MetricSeries(series.name, series.timestamps.copy(), series.values.copy()), 0
    keep = np.abs(series.values - mean) <= 3.0 * sigma
    removed = int((~keep).sum())
    return MetricSeries(series.name, series.timestamps[keep], series.values[keep]), removed


def resample_and_impute(
    series: MetricSeries,
    interval: int,
    alpha: float = 0.3,
    start: int | None = None,
    n_points: int | None = None,
) -> MetricSeries:
    """Bucket-mean resample onto a uniform grid; fill gaps with a running EMA.

    Bucket k covers [start + k*interval, start + (k+1)*interval). Populated
    buckets take the arithmetic mean of their samples and update the EMA
    (EMA_t = alpha*v + (1-alpha)*EMA); empty buckets take the current EMA.
    Leading gaps (grid starting before the first sample) are backfilled with
    the first observed value. Every grid point comes out populated.
    """
    if len(series) == 0:
        raise TraceError(f"{series.name}: cannot resample an empty series")
    if interval <= 0:
        raise TraceError("interval must be positive")
    if not 0.0 < alpha <= 1.0:
        raise TraceError("alpha must be in (0, 1]")
    if start is None:
        start = int(series.timestamps[0])
    if n_points is None:
        n_points = int((series.timestamps[-1] - start) // interval) + 1
    buckets = (series.timestamps - start) // interval
    in_range = (buckets >= 0) & (buckets < n_points)
    buckets = buckets[in_range]
    vals = series.values[in_range]
    if len(vals) == 0:
        raise TraceError(f"{series.name}: no samples fall on the requested grid")

    sums = np.zeros(n_points)
    counts = np.zeros(n_points)
    np.add.at(sums, buckets, vals)
    np.add.at(counts, buckets, 1.0)

    first_value = float(vals[0])
    out = np.empty(n_points)
    ema = None
    for k in range(n_points):
        if counts[k] > 0:
            v = sums[k] / counts[k]
            ema = v if ema is None else alpha * v + (1.0 - alpha) * ema
            out[k] = v
        else:
            out[k] = first_value if ema is None else ema
    grid = start + np.arange(n_points, dtype=np.int64) * interval
    return MetricSeries(series.name, grid, out)


def minmax_fit_transform(frame: TraceFrame):
    """Map each column to [0, 1]; constant columns map to 0.0."""
    mins = frame.data.min(axis=0)
    maxs = frame.data.max(axis=0)
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (frame.data - mins) / safe
    scaled[:, span == 0] = 0.0
    out = TraceFrame(frame.start_time, frame.tick_interval, scaled)
    return out, ScalerParams(mins, maxs)


def minmax_inverse_transform(frame: TraceFrame, params: ScalerParams) -> TraceFrame:
    data = frame.data * (params.maxs - params.mins) + params.mins
    return TraceFrame(frame.start_time, frame.tick_interval, data)


def inverse_transform_column(values: np.ndarray, params: ScalerParams, column: str) -> np.ndarray:
    idx = COLUMNS.index(column)
    return np.asarray(values) * (params.maxs[idx] - params.mins[idx]) + params.mins[idx]


def preprocess(frame: TraceFrame, alpha: float = 0.3):
    """Full cleaning pipeline: 3-sigma filter, resample+impute, min-max.

    Returns (normalized frame, ScalerParams, per-column removal counts).
    """
    cleaned_cols = []
    removed = {}
    for name in COLUMNS:
        series, n_removed = clean_outliers_3sigma(frame.series(name))
        series = resample_and_impute(
            series,
            frame.tick_interval,
            alpha=alpha,
            start=frame.start_time,
            n_points=frame.n_ticks,
        )
        cleaned_cols.append(series.values)
        removed[name] = n_removed
    cleaned = TraceFrame(frame.start_time, frame.tick_interval, np.column_stack(cleaned_cols))
    normalized, params = minmax_fit_transform(cleaned)
    return normalized, params, removed


def make_windows(
    frame: TraceFrame,
    window_len: int = 72,
    horizon: int = 12,
    target_metric: str = "cpu_util",
) -> WindowedDataset:
    """Cut contiguous sliding windows with horizon-length targets."""
    n = frame.n_ticks
    needed = window_len + horizon
    if n < needed:
        raise TraceError(f"frame has {n} ticks; need at least {needed} (window_len + horizon)")
    count = n - window_len - horizon + 1
    target_col = frame.column(target_metric)
    inputs = np.empty((count, window_len, len(COLUMNS)))
    targets = np.empty((count, horizon))
    for i in range(count):
        inputs[i] = frame.data[i : i + window_len]
        targets[i] = target_col[i + window_len : i + window_len + horizon]
    return WindowedDataset(inputs, targets, window_len, horizon, target_metric)


def split_train_test(dataset: WindowedDataset, ratio: float = 0.8):
    """Chronological split: first floor(ratio*count) windows train."""
    if not 0.0 < ratio < 1.0:
        raise TraceError("ratio must be in (0, 1)")
    count = len(dataset)
    n_train = int(ratio * count)
    if n_train == 0 or n_train == count:
        raise TraceError(f"split ratio {ratio} leaves an empty side for {count} windows")
    train = WindowedDataset(
        dataset.inputs[:n_train],
        dataset.targets[:n_train],
        dataset.window_len,
        dataset.horizon,
        dataset.target_metric,
    )
    test = WindowedDataset(
        dataset.inputs[n_train:],
        dataset.targets[n_train:],
        dataset.window_len,
        dataset.horizon,
        dataset.target_metric,
    )
    return train, test
