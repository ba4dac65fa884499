"""Discrete-time cluster simulator.

One tick is 5 simulated minutes. Each step activates matured capacity
reservations, applies the scheduler action, spreads the tick's demand across
nodes proportionally to free serving capacity, and derives utilization,
latency, and success rate. Demand beyond active capacity is dropped, never
stored as impossible usage.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .agent_actions import Action, ActionKind
from .trace import TraceFrame


class SimError(ValueError):
    pass


@dataclass
class NodeState:
    node_id: int
    cpu_capacity: float  # cores (hardware ceiling)
    mem_capacity: float  # GB
    cpu_used: float = 0.0
    mem_used: float = 0.0
    storage_io_util: float = 0.0
    vm_count: int = 0

    def copy(self) -> "NodeState":
        return replace(self)


@dataclass
class EnvConfig:
    """Physical and economic parameters of the simulated cluster."""

    n_nodes: int = 20
    node_cpu: float = 8.0
    node_mem: float = 32.0
    vm_cores: float = 4.0
    vm_mem_gb: float = 8.0
    initial_vms: int = 40  # peak-provisioned: the static baseline's pool
    min_vms: int = 1
    base_latency_ms: float = 12.4  # latency at zero load; 45*(1-0.725)
    provision_delay_ticks: int = 1
    work_per_request: float = 140.0  # capacity units per (normalized) request-rate unit
    vm_cost_per_tick: float = 1.0
    action_cost_per_level: float = 0.5


@dataclass
class ClusterState:
    tick: int
    nodes: list
    pending_reservations: list = field(default_factory=list)  # [(activation_tick, vms)]
    last_latency_ms: float = 0.0
    request_success_rate: float = 1.0

    @property
    def active_vms(self) -> int:
        return sum(n.vm_count for n in self.nodes)

    def copy(self) -> "ClusterState":
        return ClusterState(
            tick=self.tick,
            nodes=[n.copy() for n in self.nodes],
            pending_reservations=list(self.pending_reservations),
            last_latency_ms=self.last_latency_ms,
            request_success_rate=self.request_success_rate,
        )


@dataclass
class ConstraintSet:
    cpu_max: float = 0.85
    mem_max: float = 0.90
    storage_io_max: float = 0.80
    p99_latency_max: float = 200.0
    api_success_min: float = 0.999
    max_node_imbalance: float = 0.20


@dataclass
class ConstraintReport:
    violations: list  # [(name, observed, bound)]
    violation_rate: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class StepObservation:
    tick: int
    demand: float
    served: float
    dropped: float
    node_utilizations: np.ndarray
    cpu_util: float  # capacity-weighted mean over active capacity
    max_node_util: float
    mem_util: float
    latency_ms: float
    success_rate: float
    active_vms: int
    active_capacity: float
    action_id: int
    action_cost: float
    infeasible: bool


def init_cluster(
    n_nodes: int,
    node_cpu: float,
    node_mem: float,
    initial_vms: int,
    seed: int = 0,
    vm_cores: float = 1.0,
) -> ClusterState:
    """Round-robin VM placement onto an idle cluster."""
    if n_nodes <= 0:
        raise SimError("need at least one node")
    per_node_limit = int(node_cpu // vm_cores)
    if initial_vms > per_node_limit * n_nodes:
        raise SimError(
            f"cannot place {initial_vms} VMs on {n_nodes} nodes of {node_cpu} cores"
        )
    nodes = [NodeState(i, node_cpu, node_mem) for i in range(n_nodes)]
    for k in range(initial_vms):
        nodes[k % n_nodes].vm_count += 1
    return ClusterState(tick=0, nodes=nodes)


def node_serving_capacity(node: NodeState, cfg: EnvConfig) -> float:
    return min(node.vm_count * cfg.vm_cores, node.cpu_capacity)


def latency_model(utilization: float, base_latency_ms: float = 12.4) -> float:
    """M/M/1-style queueing curve, capped at 99% load."""
    if utilization < 0:
        raise SimError("utilization must be non-negative")
    return base_latency_ms / (1.0 - min(utilization, 0.99))


def offered_load(frame: TraceFrame, tick: int, work_per_request: float = 1.0) -> float:
    """Demand in capacity units at a tick: request rate times work factor."""
    if not 0 <= tick < frame.n_ticks:
        raise SimError(f"tick {tick} outside frame of {frame.n_ticks} ticks")
    return float(frame.column("request_rate")[tick]) * work_per_request


def _apply_expand(state: ClusterState, vms: int, cfg: EnvConfig) -> int:
    """Place VMs on the emptiest nodes first. Returns how many actually fit."""
    placed = 0
    for _ in range(vms):
        candidates = [
            n for n in state.nodes if (n.vm_count + 1) * cfg.vm_cores <= n.cpu_capacity
        ]
        if not candidates:
            break
        target = min(candidates, key=lambda n: (n.vm_count, n.node_id))
        target.vm_count += 1
        placed += 1
    return placed


def _apply_contract(state: ClusterState, vms: int, cfg: EnvConfig) -> int:
    removed = 0
    for _ in range(vms):
        if state.active_vms <= cfg.min_vms:
            break
        candidates = [n for n in state.nodes if n.vm_count > 0]
        target = max(candidates, key=lambda n: (n.vm_count, -n.node_id))
        target.vm_count -= 1
        removed += 1
    return removed


def _apply_migrate(state: ClusterState, vms: int, cfg: EnvConfig) -> int:
    moved = 0
    for _ in range(vms):
        donors = [n for n in state.nodes if n.vm_count > 0]
        if not donors:
            break
        src = max(donors, key=lambda n: (n.vm_count, -n.node_id))
        receivers = [
            n
            for n in state.nodes
            if n is not src and (n.vm_count + 1) * cfg.vm_cores <= n.cpu_capacity
        ]
        if not receivers:
            break
        dst = min(receivers, key=lambda n: (n.vm_count, n.node_id))
        if src.vm_count - dst.vm_count < 2:
            break  # already balanced; moving would just swap the imbalance
        src.vm_count -= 1
        dst.vm_count += 1
        moved += 1
    return moved


def step(state: ClusterState, demand: float, action: Action, cfg: EnvConfig, storage_io: float = 0.0):
    """Advance one tick; pure function of (state, demand, action, cfg)."""
    new = state.copy()
    new.tick = state.tick + 1

    # 1. activate matured reservations
    matured = [r for r in new.pending_reservations if r[0] <= state.tick]
    new.pending_reservations = [r for r in new.pending_reservations if r[0] > state.tick]
    for _, vms in matured:
        _apply_expand(new, vms, cfg)

    # 2. apply the scheduler action
    infeasible = False
    action_cost = 0.0
    if action.kind == ActionKind.EXPAND:
        delay = action.delay if action.delay is not None else cfg.provision_delay_ticks
        action_cost = action.level * cfg.action_cost_per_level
        if delay <= 0:
            if _apply_expand(new, action.level, cfg) < action.level:
                infeasible = True
        else:
            new.pending_reservations.append((state.tick + delay, action.level))
    elif action.kind == ActionKind.CONTRACT:
        action_cost = action.level * cfg.action_cost_per_level
        if _apply_contract(new, action.level, cfg) < action.level:
            infeasible = True
    elif action.kind == ActionKind.MIGRATE:
        action_cost = action.level * cfg.action_cost_per_level
        if _apply_migrate(new, action.level, cfg) < action.level:
            infeasible = True

    # 3. distribute demand proportional to free serving capacity
    caps = np.array([node_serving_capacity(n, cfg) for n in new.nodes])
    total_cap = float(caps.sum())
    if total_cap > 0 and demand > 0:
        shares = caps / total_cap
        assigned = shares * demand
        served_per_node = np.minimum(assigned, caps)
    else:
        served_per_node = np.zeros(len(new.nodes))
    served = float(served_per_node.sum())
    dropped = demand - served

    # 4. derive utilizations, latency, success rate
    node_utils = np.divide(
        served_per_node, caps, out=np.zeros_like(served_per_node), where=caps > 0
    )
    for node, used in zip(new.nodes, served_per_node):
        node.cpu_used = float(used)
        node.mem_used = min(node.vm_count * cfg.vm_mem_gb, node.mem_capacity)
        node.storage_io_util = storage_io
    cpu_util = served / total_cap if total_cap > 0 else 0.0
    max_util = float(node_utils.max()) if len(node_utils) else 0.0
    mem_total = sum(n.mem_capacity for n in new.nodes)
    mem_util = sum(n.mem_used for n in new.nodes) / mem_total if mem_total else 0.0
    latency = latency_model(max_util, cfg.base_latency_ms)
    success = served / demand if demand > 0 else 1.0
    new.last_latency_ms = latency
    new.request_success_rate = success

    obs = StepObservation(
        tick=new.tick,
        demand=demand,
        served=served,
        dropped=dropped,
        node_utilizations=node_utils,
        cpu_util=cpu_util,
        max_node_util=max_util,
        mem_util=mem_util,
        latency_ms=latency,
        success_rate=success,
        active_vms=new.active_vms,
        active_capacity=total_cap,
        action_id=action.action_id,
        action_cost=action_cost,
        infeasible=infeasible,
    )
    return new, obs


def node_cpu_utilizations(state: ClusterState, cfg: EnvConfig) -> np.ndarray:
    """Per-node CPU utilization over the nodes that hold serving capacity.

    Nodes with no active VMs are parked, not imbalanced; they are excluded so
    the balance constraint compares live servers only.
    """
    caps = np.array([node_serving_capacity(n, cfg) for n in state.nodes])
    used = np.array([n.cpu_used for n in state.nodes])
    active = caps > 0
    if not active.any():
        return np.zeros(0)
    return used[active] / caps[active]


def imbalance(node_utils: np.ndarray) -> float:
    """Max pairwise difference of node CPU utilizations."""
    if len(node_utils) < 2:
        return 0.0
    return float(np.max(node_utils) - np.min(node_utils))


def check_constraints(state: ClusterState, constraints: ConstraintSet, cfg: EnvConfig = None) -> ConstraintReport:
    """Test the six operating constraints at the current tick."""
    cfg = cfg or EnvConfig()
    utils = node_cpu_utilizations(state, cfg)
    violations = []
    max_cpu = float(utils.max()) if len(utils) else 0.0
    if max_cpu > constraints.cpu_max:
        violations.append(("cpu_max", max_cpu, constraints.cpu_max))
    mem_utils = [
        n.mem_used / n.mem_capacity if n.mem_capacity > 0 else 0.0 for n in state.nodes
    ]
    max_mem = max(mem_utils) if mem_utils else 0.0
    if max_mem > constraints.mem_max:
        violations.append(("mem_max", max_mem, constraints.mem_max))
    max_io = max((n.storage_io_util for n in state.nodes), default=0.0)
    if max_io > constraints.storage_io_max:
        violations.append(("storage_io_max", max_io, constraints.storage_io_max))
    if state.last_latency_ms > constraints.p99_latency_max:
        violations.append(("p99_latency_max", state.last_latency_ms, constraints.p99_latency_max))
    if state.request_success_rate < constraints.api_success_min:
        violations.append(
            ("api_success_min", state.request_success_rate, constraints.api_success_min)
        )
    imb = imbalance(utils)
    if imb > constraints.max_node_imbalance:
        violations.append(("max_node_imbalance", imb, constraints.max_node_imbalance))
    return ConstraintReport(violations)


EPISODE_CSV_HEADER = (
    "tick,demand,cpu_util,mem_util,latency_ms,success_rate,action_id,reward,violations_count"
)


@dataclass
class EpisodeTrace:
    """Per-tick record of one simulated run."""

    ticks: list = field(default_factory=list)
    demand: list = field(default_factory=list)
    cpu_util: list = field(default_factory=list)
    mem_util: list = field(default_factory=list)
    latency_ms: list = field(default_factory=list)
    success_rate: list = field(default_factory=list)
    action_ids: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    violations_count: list = field(default_factory=list)
    # cost drivers, not part of the fixed CSV schema
    active_capacity: list = field(default_factory=list)
    active_vms: list = field(default_factory=list)
    served: list = field(default_factory=list)
    storage_util: list = field(default_factory=list)
    action_costs: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ticks)

    def append(self, obs: StepObservation, reward: float, n_violations: int, storage: float):
        self.ticks.append(obs.tick)
        self.demand.append(obs.demand)
        self.cpu_util.append(obs.cpu_util)
        self.mem_util.append(obs.mem_util)
        self.latency_ms.append(obs.latency_ms)
        self.success_rate.append(obs.success_rate)
        self.action_ids.append(obs.action_id)
        self.rewards.append(reward)
        self.violations_count.append(n_violations)
        self.active_capacity.append(obs.active_capacity)
        self.active_vms.append(obs.active_vms)
        self.served.append(obs.served)
        self.storage_util.append(storage)
        self.action_costs.append(obs.action_cost)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(EPISODE_CSV_HEADER + "\n")
            for i in range(len(self)):
                fh.write(
                    f"{self.ticks[i]},{repr(float(self.demand[i]))},"
                    f"{repr(float(self.cpu_util[i]))},{repr(float(self.mem_util[i]))},"
                    f"{repr(float(self.latency_ms[i]))},{repr(float(self.success_rate[i]))},"
                    f"{self.action_ids[i]},{repr(float(self.rewards[i]))},"
                    f"{self.violations_count[i]}\n"
                )

    def to_dict(self) -> dict:
        return {
            "ticks": self.ticks,
            "demand": self.demand,
            "cpu_util": self.cpu_util,
            "mem_util": self.mem_util,
            "latency_ms": self.latency_ms,
            "success_rate": self.success_rate,
            "action_ids": self.action_ids,
            "rewards": self.rewards,
            "violations_count": self.violations_count,
            "active_capacity": self.active_capacity,
            "active_vms": self.active_vms,
            "served": self.served,
            "storage_util": self.storage_util,
            "action_costs": self.action_costs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EpisodeTrace":
        trace = cls()
        for key, vals in doc.items():
            if hasattr(trace, key):
                setattr(trace, key, list(vals))
        return trace


@dataclass
class PolicyContext:
    """Everything a policy may look at when choosing the next action."""

    tick: int
    state: ClusterState
    cpu_util: float
    node_utilizations: np.ndarray
    imbalance: float
    forecast_util: float  # expected utilization `lead` ticks ahead
    forecast_lead: int
    metrics_row: np.ndarray  # current 14-metric row from the trace
    forecast_row: np.ndarray  # one-step metric forecast (next trace row)
    history: np.ndarray  # metric rows up to and including the current tick


def observed_metrics_row(trace_row: np.ndarray, state: ClusterState, cfg: EnvConfig) -> np.ndarray:
    """The 14-metric row as monitoring would see it: trace-side demand signals
    with the cluster's own utilization, memory, error, and latency readings
    substituted in. This is what the agent's state encoder consumes."""
    from .trace import COLUMNS

    row = np.asarray(trace_row, dtype=float).copy()
    cap = sum(node_serving_capacity(n, cfg) for n in state.nodes)
    used = sum(n.cpu_used for n in state.nodes)
    mem_cap = sum(n.mem_capacity for n in state.nodes)
    mem_used = sum(n.mem_used for n in state.nodes)
    row[COLUMNS.index("cpu_util")] = used / cap if cap > 0 else 1.0
    row[COLUMNS.index("mem_util")] = mem_used / mem_cap if mem_cap > 0 else 0.0
    row[COLUMNS.index("error_rate")] = 1.0 - state.request_success_rate
    row[COLUMNS.index("p99_latency")] = min(state.last_latency_ms / 1000.0, 1.0)
    return row


def reward_components(obs: StepObservation, cfg: EnvConfig, constraints: ConstraintSet):
    """Normalized (U, P, C) in [0, 1] for the scheduling reward."""
    u = min(max(obs.cpu_util, 0.0), 1.0)
    p = 1.0 - min(obs.latency_ms / constraints.p99_latency_max, 1.0)
    max_vms = cfg.n_nodes * int(cfg.node_cpu // cfg.vm_cores)
    max_tick_cost = max_vms * cfg.vm_cost_per_tick + 5 * cfg.action_cost_per_level
    cost = obs.active_vms * cfg.vm_cost_per_tick + obs.action_cost
    c = min(cost / max_tick_cost, 1.0) if max_tick_cost > 0 else 0.0
    return u, p, c


def _future_util(frame: TraceFrame, tick: int, lead: int, state: ClusterState, cfg: EnvConfig) -> float:
    """Utilization the current capacity would see at tick+lead (oracle lookahead)."""
    t = min(tick + lead, frame.n_ticks - 1)
    demand = offered_load(frame, t, cfg.work_per_request)
    cap = sum(node_serving_capacity(n, cfg) for n in state.nodes)
    return min(demand / cap, 1.0) if cap > 0 else 1.0


def run_episode(
    frame: TraceFrame,
    policy,
    constraints: ConstraintSet = None,
    seed: int = 0,
    cfg: EnvConfig = None,
    reward_weights=None,
    forecast_lead: int = 3,
    initial_state: ClusterState = None,
) -> EpisodeTrace:
    """Iterate the simulator over every tick of a trace under one policy.

    Deterministic per (frame, policy, seed). The forecast channel handed to
    the policy defaults to the trace's own future rows (oracle foresight);
    policies that ignore it are unaffected.
    """
    from .agent import RewardWeights, reward  # local import: agent depends on simenv

    constraints = constraints or ConstraintSet()
    cfg = cfg or EnvConfig()
    weights = reward_weights or RewardWeights(1.0, 1.0, 1.0)
    state = initial_state.copy() if initial_state is not None else init_cluster(
        cfg.n_nodes, cfg.node_cpu, cfg.node_mem, cfg.initial_vms, seed, cfg.vm_cores
    )
    trace = EpisodeTrace()
    storage_col = frame.column("storage_util") if frame.n_ticks else np.zeros(0)
    observed_history = []
    for tick in range(frame.n_ticks):
        utils = node_cpu_utilizations(state, cfg)
        cap = sum(node_serving_capacity(n, cfg) for n in state.nodes)
        used = sum(n.cpu_used for n in state.nodes)
        next_row = frame.data[min(tick + 1, frame.n_ticks - 1)]
        observed_history.append(observed_metrics_row(frame.data[tick], state, cfg))
        ctx = PolicyContext(
            tick=tick,
            state=state,
            cpu_util=used / cap if cap > 0 else 0.0,
            node_utilizations=utils,
            imbalance=imbalance(utils),
            forecast_util=_future_util(frame, tick, forecast_lead, state, cfg),
            forecast_lead=forecast_lead,
            metrics_row=observed_history[-1],
            forecast_row=next_row,
            history=np.asarray(observed_history),
        )
        action = policy(ctx)
        if not isinstance(action, Action):
            action = Action.from_id(int(action))
        demand = offered_load(frame, tick, cfg.work_per_request)
        state, obs = step(state, demand, action, cfg, storage_io=float(storage_col[tick]))
        u, p, c = reward_components(obs, cfg, constraints)
        r = reward(u, p, c, weights)
        report = check_constraints(state, constraints, cfg)
        trace.append(obs, r, len(report.violations), float(storage_col[tick]))
    return trace
