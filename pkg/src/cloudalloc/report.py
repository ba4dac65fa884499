"""Evaluation reports: utilization stats, latency percentiles, SLA rates,
cost breakdowns, run comparisons, and plot outputs.

The report path writes a JSON document plus companion plot-data CSVs and
rendered PNG figures for the utilization timeline and latency histogram.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simenv import EpisodeTrace
from .trace import MetricSeries

REPORT_FORMAT_VERSION = "1"
HISTOGRAM_BINS = 50


class ReportError(ValueError):
    pass


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th order statistic (1-based)."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ReportError("percentile of an empty sample")
    if not 0.0 < p <= 1.0:
        raise ReportError("p must be in (0, 1]")
    rank = math.ceil(p * len(vals))
    return vals[rank - 1]


def sla_rate(latencies, bound: float) -> float:
    """Fraction of latencies at or below the bound."""
    lats = list(latencies)
    if not lats:
        raise ReportError("sla_rate of an empty sample")
    return sum(1 for v in lats if v <= bound) / len(lats)


@dataclass
class CostRates:
    server_rate: float = 0.01  # per active capacity unit per tick
    bandwidth_rate: float = 0.002  # per served demand unit per tick
    storage_rate: float = 0.001  # per storage_util point per tick
    labor_flat: float = 5.0  # per run

    def __post_init__(self):
        for name in ("server_rate", "bandwidth_rate", "storage_rate", "labor_flat"):
            if getattr(self, name) < 0:
                raise ReportError(f"{name} must be non-negative")


@dataclass
class CostBreakdown:
    server: float
    bandwidth: float
    storage: float
    labor: float

    @property
    def total(self) -> float:
        return self.server + self.bandwidth + self.storage + self.labor

    def to_dict(self) -> dict:
        return {
            "server": self.server,
            "bandwidth": self.bandwidth,
            "storage": self.storage,
            "labor": self.labor,
            "total": self.total,
        }


def cost_of_run(trace: EpisodeTrace, rates: CostRates = None) -> CostBreakdown:
    """Price a run: capacity-hours, traffic, storage activity, flat labor."""
    rates = rates or CostRates()
    server = sum(trace.active_capacity) * rates.server_rate
    bandwidth = sum(trace.served) * rates.bandwidth_rate
    storage = sum(trace.storage_util) * rates.storage_rate
    return CostBreakdown(server, bandwidth, storage, rates.labor_flat)


def savings_rate(before: float, after: float) -> float:
    """Percent saved, rounded to 1 decimal for display."""
    if before <= 0:
        raise ReportError("before-cost must be positive")
    return round(100.0 * (before - after) / before, 1)


@dataclass
class RunReport:
    policy: str
    seed: int
    ticks: int
    avg_cpu_util: float
    peak_cpu_util: float
    avg_mem_util: float
    peak_mem_util: float
    avg_storage_util: float
    peak_storage_util: float
    latency_p50: float
    latency_p95: float
    latency_p99: float
    latency_p999: float
    mean_latency: float
    latency_cov: float  # coefficient of variation
    sla: float
    violation_rate: float
    cost: CostBreakdown

    def to_dict(self) -> dict:
        doc = {
            "format_version": REPORT_FORMAT_VERSION,
            "policy": self.policy,
            "seed": self.seed,
            "ticks": self.ticks,
            "avg_cpu_util": self.avg_cpu_util,
            "peak_cpu_util": self.peak_cpu_util,
            "avg_mem_util": self.avg_mem_util,
            "peak_mem_util": self.peak_mem_util,
            "avg_storage_util": self.avg_storage_util,
            "peak_storage_util": self.peak_storage_util,
            "latency_p50": self.latency_p50,
            "latency_p95": self.latency_p95,
            "latency_p99": self.latency_p99,
            "latency_p999": self.latency_p999,
            "mean_latency": self.mean_latency,
            "latency_cov": self.latency_cov,
            "sla_rate": self.sla,
            "violation_rate": self.violation_rate,
            "cost": self.cost.to_dict(),
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        cost = doc["cost"]
        return cls(
            policy=doc["policy"],
            seed=doc["seed"],
            ticks=doc["ticks"],
            avg_cpu_util=doc["avg_cpu_util"],
            peak_cpu_util=doc["peak_cpu_util"],
            avg_mem_util=doc["avg_mem_util"],
            peak_mem_util=doc["peak_mem_util"],
            avg_storage_util=doc["avg_storage_util"],
            peak_storage_util=doc["peak_storage_util"],
            latency_p50=doc["latency_p50"],
            latency_p95=doc["latency_p95"],
            latency_p99=doc["latency_p99"],
            latency_p999=doc["latency_p999"],
            mean_latency=doc["mean_latency"],
            latency_cov=doc["latency_cov"],
            sla=doc["sla_rate"],
            violation_rate=doc["violation_rate"],
            cost=CostBreakdown(cost["server"], cost["bandwidth"], cost["storage"], cost["labor"]),
        )


def coefficient_of_variation(values) -> float:
    arr = np.asarray(list(values), dtype=float)
    mean = arr.mean()
    if mean == 0:
        raise ReportError("coefficient of variation undefined for zero mean")
    return float(arr.std() / mean)


def build_run_report(
    trace: EpisodeTrace,
    sla_bound_ms: float = 200.0,
    rates: CostRates = None,
    policy: str = "unknown",
    seed: int = 0,
) -> RunReport:
    """Aggregate an EpisodeTrace into the standard evaluation report."""
    if len(trace) == 0:
        raise ReportError("cannot report on an empty episode")
    lats = trace.latency_ms
    return RunReport(
        policy=policy,
        seed=seed,
        ticks=len(trace),
        avg_cpu_util=float(np.mean(trace.cpu_util)),
        peak_cpu_util=float(np.max(trace.cpu_util)),
        avg_mem_util=float(np.mean(trace.mem_util)),
        peak_mem_util=float(np.max(trace.mem_util)),
        avg_storage_util=float(np.mean(trace.storage_util)),
        peak_storage_util=float(np.max(trace.storage_util)),
        latency_p50=percentile(lats, 0.50),
        latency_p95=percentile(lats, 0.95),
        latency_p99=percentile(lats, 0.99),
        latency_p999=percentile(lats, 0.999),
        mean_latency=float(np.mean(lats)),
        latency_cov=coefficient_of_variation(lats),
        sla=sla_rate(lats, sla_bound_ms),
        violation_rate=float(np.mean([1.0 if v > 0 else 0.0 for v in trace.violations_count])),
        cost=cost_of_run(trace, rates),
    )


@dataclass
class Comparison:
    """Relative changes of a candidate run against a baseline."""

    metrics: dict  # name -> (baseline, candidate, relative change %)

    def to_dict(self) -> dict:
        return {
            name: {"baseline": b, "candidate": c, "relative_change_pct": r}
            for name, (b, c, r) in self.metrics.items()
        }


def _relative_change(baseline: float, candidate: float) -> float:
    if baseline == 0:
        return 0.0 if candidate == 0 else math.inf
    return 100.0 * (candidate - baseline) / baseline


def compare_runs(baseline: RunReport, candidate: RunReport) -> Comparison:
    """Relative deltas on utilization, latency, SLA, and total cost."""
    if baseline.ticks != candidate.ticks:
        raise ReportError(
            f"runs are not comparable: {baseline.ticks} vs {candidate.ticks} ticks"
        )
    pairs = {
        "avg_cpu_util": (baseline.avg_cpu_util, candidate.avg_cpu_util),
        "mean_latency": (baseline.mean_latency, candidate.mean_latency),
        "latency_p99": (baseline.latency_p99, candidate.latency_p99),
        "sla_rate": (baseline.sla, candidate.sla),
        "total_cost": (baseline.cost.total, candidate.cost.total),
    }
    return Comparison(
        {name: (b, c, _relative_change(b, c)) for name, (b, c) in pairs.items()}
    )


def threshold_crossing_events(series: MetricSeries, bound: float, lead: int = 0):
    """(tick, value) for each upward crossing of the bound."""
    events = []
    vals = series.values
    for t in range(1, len(vals)):
        if vals[t - 1] <= bound < vals[t]:
            events.append((t, float(vals[t])))
    return events


def early_warning_hit_rate(actual: MetricSeries, forecast: MetricSeries, bound: float, lead: int) -> float:
    """Fraction of actual crossings that the forecast flagged >= lead ticks early."""
    actual_events = threshold_crossing_events(actual, bound)
    if not actual_events:
        return 1.0
    fvals = forecast.values
    hits = 0
    for tick, _ in actual_events:
        window = fvals[: max(tick - lead + 1, 0)]
        if np.any(window > bound):
            hits += 1
    return hits / len(actual_events)


def emit_report(report: RunReport, out_dir, trace: EpisodeTrace = None) -> Path:
    """Write report JSON plus plot CSVs and PNG figures.

    The companion utilization/latency artifacts need the episode trace; when
    it is omitted only the JSON document is written. Returns the JSON path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    try:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise ReportError(f"cannot write report to {json_path}: {exc}") from exc

    if trace is not None and len(trace) > 0:
        _write_util_csv(out_dir / "utilization_over_time.csv", trace)
        counts, edges = np.histogram(trace.latency_ms, bins=HISTOGRAM_BINS)
        _write_hist_csv(out_dir / "latency_histogram.csv", counts, edges)
        _render_figures(out_dir, trace, counts, edges)
    return json_path


def _write_util_csv(path, trace: EpisodeTrace) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("tick,cpu_util,mem_util\n")
        for i in range(len(trace)):
            fh.write(
                f"{trace.ticks[i]},{repr(float(trace.cpu_util[i]))},"
                f"{repr(float(trace.mem_util[i]))}\n"
            )


def _write_hist_csv(path, counts, edges) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_left_ms,bin_right_ms,count\n")
        for i, count in enumerate(counts):
            fh.write(f"{repr(float(edges[i]))},{repr(float(edges[i + 1]))},{int(count)}\n")


def _render_figures(out_dir: Path, trace: EpisodeTrace, counts, edges) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(trace.ticks, trace.cpu_util, label="cpu", lw=1.0)
    ax.plot(trace.ticks, trace.mem_util, label="mem", lw=1.0)
    ax.set_xlabel("tick")
    ax.set_ylabel("utilization")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(out_dir / "utilization_over_time.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    widths = np.diff(edges)
    ax.bar(edges[:-1], counts, width=widths, align="edge", edgecolor="none")
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("ticks")
    fig.tight_layout()
    fig.savefig(out_dir / "latency_histogram.png", dpi=120)
    plt.close(fig)
