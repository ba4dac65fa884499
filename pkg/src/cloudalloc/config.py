"""Run configuration: one JSON document drives the whole pipeline.

validate_config fills defaults per module and reports every violation with
its field path, not just the first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .agent import AgentHyperparams, RewardWeights
from .forecast import TrainConfig
from .optimize import ObjectiveWeights, PsoConfig
from .report import CostRates
from .simenv import ConstraintSet, EnvConfig
from .trace import WorkloadSpec


class ConfigError(ValueError):
    """Carries the full list of (field path, message) violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.violations)
        super().__init__(f"invalid config: {lines}")


@dataclass
class ForecastConfig:
    layer_sizes: tuple = (16, 32, 16)
    dense_sizes: tuple = (64, 32)
    window_len: int = 24
    horizon: int = 6
    dropout_rate: float = 0.3
    target_metric: str = "cpu_util"
    split_ratio: float = 0.8
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class ObjectiveConfig:
    weights: ObjectiveWeights | str = field(
        default_factory=lambda: ObjectiveWeights(1.0, 1.0, 1.0)
    )  # or the string "tune"
    pso: PsoConfig = field(default_factory=lambda: PsoConfig(swarm_size=8, iterations=10, bounds=((0.0, 1.0),) * 3))


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    trace: WorkloadSpec = field(default_factory=lambda: WorkloadSpec(duration_ticks=2016))
    trace_input_path: str | None = None
    preprocessing_alpha: float = 0.3
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    cluster: EnvConfig = field(default_factory=EnvConfig)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    agent: AgentHyperparams = field(default_factory=AgentHyperparams)
    reward_weights: RewardWeights = field(default_factory=lambda: RewardWeights(0.35, 0.5, 0.15))
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    costs: CostRates = field(default_factory=CostRates)


class _Checker:
    def __init__(self, doc: dict):
        self.doc = doc
        self.errors = []

    def section(self, name: str) -> dict:
        sect = self.doc.get(name, {})
        if not isinstance(sect, dict):
            self.errors.append((name, f"expected an object, got {type(sect).__name__}"))
            return {}
        return sect

    def value(self, sect: dict, path: str, key: str, default, kind, lo=None, hi=None, lo_open=False):
        field_path = f"{path}.{key}" if path else key
        if key not in sect:
            return default
        v = sect[key]
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, kind) or isinstance(v, bool):
            self.errors.append((field_path, f"expected {kind.__name__}, got {type(v).__name__}"))
            return default
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.errors.append((field_path, f"value {v} below minimum {lo}"))
            return default
        if hi is not None and v > hi:
            self.errors.append((field_path, f"value {v} above maximum {hi}"))
            return default
        return v

    def int_list(self, sect: dict, path: str, key: str, default):
        field_path = f"{path}.{key}" if path else key
        if key not in sect:
            return default
        v = sect[key]
        if not isinstance(v, list) or not all(isinstance(x, int) and x > 0 for x in v):
            self.errors.append((field_path, "expected a list of positive integers"))
            return default
        return tuple(v)

    def triple(self, sect: dict, path: str, key: str, default):
        field_path = f"{path}.{key}" if path else key
        if key not in sect:
            return default
        v = sect[key]
        if (
            not isinstance(v, list)
            or len(v) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0 for x in v)
            or sum(v) <= 0
        ):
            self.errors.append((field_path, "expected 3 non-negative numbers, not all zero"))
            return default
        return tuple(float(x) for x in v)


def validate_config(doc: dict) -> RunConfig:
    """Fill defaults and verify ranges; raises ConfigError with all violations."""
    if not isinstance(doc, dict):
        raise ConfigError([("", f"expected a JSON object, got {type(doc).__name__}")])
    c = _Checker(doc)
    cfg = RunConfig()

    cfg.seed = c.value(doc, "", "seed", 0, int)
    cfg.output_dir = doc.get("output_dir", "out")
    if not isinstance(cfg.output_dir, str):
        c.errors.append(("output_dir", "expected a string"))
        cfg.output_dir = "out"

    t = c.section("trace")
    cfg.trace_input_path = t.get("input_path")
    if cfg.trace_input_path is not None and not isinstance(cfg.trace_input_path, str):
        c.errors.append(("trace.input_path", "expected a string path"))
        cfg.trace_input_path = None
    peak_hours = t.get("peak_hours", [10, 14, 20])
    if not isinstance(peak_hours, list) or not all(
        isinstance(h, (int, float)) and 0 <= h < 24 for h in peak_hours
    ):
        c.errors.append(("trace.peak_hours", "expected hours of day in [0, 24)"))
        peak_hours = [10, 14, 20]
    cfg.trace = WorkloadSpec(
        duration_ticks=c.value(t, "trace", "duration_ticks", 2016, int, lo=1),
        base_level=c.value(t, "trace", "base_level", 0.45, float, lo=0.0, hi=1.0),
        daily_amplitude=c.value(t, "trace", "daily_amplitude", 0.40, float, lo=0.0, hi=1.0),
        peak_hours=tuple(peak_hours),
        peak_width_hours=c.value(t, "trace", "peak_width_hours", 1.1, float, lo=0.0, lo_open=True),
        noise_sigma=c.value(t, "trace", "noise_sigma", 0.02, float, lo=0.0),
        burst_probability=c.value(t, "trace", "burst_probability", 0.01, float, lo=0.0, hi=1.0),
        burst_magnitude=c.value(t, "trace", "burst_magnitude", 0.15, float, lo=0.0, hi=1.0),
        seed=c.value(t, "trace", "seed", 0, int),
        tick_interval=c.value(t, "trace", "tick_interval", 300, int, lo=1),
        start_time=c.value(t, "trace", "start_time", 0, int),
    )
    if "seed" not in t:
        cfg.trace.seed = cfg.seed

    p = c.section("preprocessing")
    cfg.preprocessing_alpha = c.value(p, "preprocessing", "alpha", 0.3, float, lo=0.0, hi=1.0, lo_open=True)

    f = c.section("forecast")
    train_sect = f.get("train", {}) if isinstance(f.get("train", {}), dict) else {}
    cfg.forecast = ForecastConfig(
        layer_sizes=c.int_list(f, "forecast", "layer_sizes", (16, 32, 16)),
        dense_sizes=c.int_list(f, "forecast", "dense_sizes", (64, 32)),
        window_len=c.value(f, "forecast", "window_len", 24, int, lo=1),
        horizon=c.value(f, "forecast", "horizon", 6, int, lo=1),
        dropout_rate=c.value(f, "forecast", "dropout_rate", 0.3, float, lo=0.0, hi=0.999999),
        target_metric=f.get("target_metric", "cpu_util"),
        split_ratio=c.value(f, "forecast", "split_ratio", 0.8, float, lo=0.0, hi=1.0, lo_open=True),
        train=TrainConfig(
            epochs=c.value(train_sect, "forecast.train", "epochs", 20, int, lo=0),
            initial_lr=c.value(train_sect, "forecast.train", "initial_lr", 0.001, float, lo=0.0, lo_open=True),
            lr_min=c.value(train_sect, "forecast.train", "lr_min", 1e-5, float, lo=0.0),
            batch_size=c.value(train_sect, "forecast.train", "batch_size", 64, int, lo=1),
            seed=cfg.seed,
            gradient_clip=c.value(train_sect, "forecast.train", "gradient_clip", 5.0, float, lo=0.0, lo_open=True),
        ),
    )
    from .trace import COLUMNS

    if cfg.forecast.target_metric not in COLUMNS:
        c.errors.append(("forecast.target_metric", f"unknown metric {cfg.forecast.target_metric!r}"))
        cfg.forecast.target_metric = "cpu_util"
    if cfg.forecast.dropout_rate is None or not 0.0 <= cfg.forecast.dropout_rate < 1.0:
        c.errors.append(("forecast.dropout_rate", f"value {f.get('dropout_rate')} outside [0, 1)"))
        cfg.forecast.dropout_rate = 0.3

    cl = c.section("cluster")
    cfg.cluster = EnvConfig(
        n_nodes=c.value(cl, "cluster", "n_nodes", 20, int, lo=1),
        node_cpu=c.value(cl, "cluster", "node_cpu", 8.0, float, lo=0.0, lo_open=True),
        node_mem=c.value(cl, "cluster", "node_mem", 32.0, float, lo=0.0, lo_open=True),
        vm_cores=c.value(cl, "cluster", "vm_cores", 4.0, float, lo=0.0, lo_open=True),
        vm_mem_gb=c.value(cl, "cluster", "vm_mem_gb", 8.0, float, lo=0.0, lo_open=True),
        initial_vms=c.value(cl, "cluster", "initial_vms", 40, int, lo=1),
        min_vms=c.value(cl, "cluster", "min_vms", 1, int, lo=0),
        base_latency_ms=c.value(cl, "cluster", "base_latency_ms", 12.4, float, lo=0.0, lo_open=True),
        provision_delay_ticks=c.value(cl, "cluster", "provision_delay_ticks", 1, int, lo=0),
        work_per_request=c.value(cl, "cluster", "work_per_request", 140.0, float, lo=0.0, lo_open=True),
        vm_cost_per_tick=c.value(cl, "cluster", "vm_cost_per_tick", 1.0, float, lo=0.0),
        action_cost_per_level=c.value(cl, "cluster", "action_cost_per_level", 0.5, float, lo=0.0),
    )

    cn = c.section("constraints")
    cfg.constraints = ConstraintSet(
        cpu_max=c.value(cn, "constraints", "cpu_max", 0.85, float, lo=0.0, hi=1.0, lo_open=True),
        mem_max=c.value(cn, "constraints", "mem_max", 0.90, float, lo=0.0, hi=1.0, lo_open=True),
        storage_io_max=c.value(cn, "constraints", "storage_io_max", 0.80, float, lo=0.0, hi=1.0, lo_open=True),
        p99_latency_max=c.value(cn, "constraints", "p99_latency_max", 200.0, float, lo=0.0, lo_open=True),
        api_success_min=c.value(cn, "constraints", "api_success_min", 0.999, float, lo=0.0, hi=1.0, lo_open=True),
        max_node_imbalance=c.value(cn, "constraints", "max_node_imbalance", 0.20, float, lo=0.0, hi=1.0, lo_open=True),
    )

    a = c.section("agent")
    cfg.agent = AgentHyperparams(
        gamma=c.value(a, "agent", "gamma", 0.95, float, lo=0.0, hi=0.999999),
        buffer_capacity=c.value(a, "agent", "buffer_capacity", 10_000, int, lo=1),
        batch_size=c.value(a, "agent", "batch_size", 64, int, lo=1),
        sync_every=c.value(a, "agent", "sync_every", 250, int, lo=1),
        lr=c.value(a, "agent", "lr", 0.001, float, lo=0.0, lo_open=True),
        epsilon_start=c.value(a, "agent", "epsilon_start", 1.0, float, lo=0.0, hi=1.0),
        epsilon_final=c.value(a, "agent", "epsilon_final", 0.05, float, lo=0.0, hi=1.0),
        hidden_sizes=c.int_list(a, "agent", "hidden_sizes", (64, 64)),
        episodes=c.value(a, "agent", "episodes", 4, int, lo=0),
        warmup_steps=c.value(a, "agent", "warmup_steps", 200, int, lo=0),
    )
    rw = c.triple(a, "agent", "reward_weights", (0.35, 0.5, 0.15))
    cfg.reward_weights = RewardWeights(*rw)

    o = c.section("objective")
    obj_weights = o.get("weights", [1.0, 1.0, 1.0])
    if obj_weights == "tune":
        cfg.objective.weights = "tune"
    else:
        trip = c.triple(o, "objective", "weights", (1.0, 1.0, 1.0))
        cfg.objective.weights = ObjectiveWeights(*trip)
    pso_sect = o.get("pso", {}) if isinstance(o.get("pso", {}), dict) else {}
    cfg.objective.pso = PsoConfig(
        swarm_size=c.value(pso_sect, "objective.pso", "swarm_size", 8, int, lo=2),
        iterations=c.value(pso_sect, "objective.pso", "iterations", 10, int, lo=1),
        inertia=c.value(pso_sect, "objective.pso", "inertia", 0.72, float, lo=0.0),
        cognitive=c.value(pso_sect, "objective.pso", "cognitive", 1.49, float, lo=0.0),
        social=c.value(pso_sect, "objective.pso", "social", 1.49, float, lo=0.0),
        bounds=((0.0, 1.0),) * 3,
        seed=cfg.seed,
    )

    co = c.section("costs")
    cfg.costs = CostRates(
        server_rate=c.value(co, "costs", "server_rate", 0.01, float, lo=0.0),
        bandwidth_rate=c.value(co, "costs", "bandwidth_rate", 0.002, float, lo=0.0),
        storage_rate=c.value(co, "costs", "storage_rate", 0.001, float, lo=0.0),
        labor_flat=c.value(co, "costs", "labor_flat", 5.0, float, lo=0.0),
    )

    if c.errors:
        raise ConfigError(c.errors)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return validate_config(doc)
