"""Double-DQN scheduling agent and the baseline policies it is compared to.

The agent observes a 42-dim state (current metrics, one-step forecast,
12-tick rolling means), picks one of 16 discrete actions, and is trained
off-policy from a FIFO replay buffer with a periodically synced target
network. Baselines: a static do-nothing policy and a threshold-reactive
policy with 3-tick advance reservations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn, simenv
from .agent_actions import Action, ActionKind, N_ACTIONS, NOOP
from .trace import TraceFrame

STATE_DIM = 42
ROLLING_WINDOW = 12
CHECKPOINT_VERSION = "1"


class AgentError(ValueError):
    pass


@dataclass
class RewardWeights:
    """Coefficients of the scheduling reward; normalized to sum to 1."""

    w1: float
    w2: float
    w3: float

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or self.w3 < 0:
            raise AgentError("reward weights must be non-negative")
        total = self.w1 + self.w2 + self.w3
        if total <= 0:
            raise AgentError("reward weights must not all be zero")
        self.w1, self.w2, self.w3 = self.w1 / total, self.w2 / total, self.w3 / total

    def as_tuple(self):
        return (self.w1, self.w2, self.w3)


def reward(U: float, P: float, C: float, w: RewardWeights) -> float:
    """R = w1*U + w2*P - w3*C with all components normalized to [0, 1]."""
    for name, v in (("U", U), ("P", P), ("C", C)):
        if not 0.0 <= v <= 1.0:
            raise AgentError(f"reward component {name}={v} outside [0, 1]; normalize upstream")
    return w.w1 * U + w.w2 * P - w.w3 * C


def encode_state(history: np.ndarray, forecast_row: np.ndarray) -> np.ndarray:
    """42-vector: current 14 metrics ++ 14 forecast values ++ 14 rolling means.

    History shorter than the rolling window is padded by repeating its first
    row.
    """
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.shape[0] < ROLLING_WINDOW:
        pad = np.repeat(hist[:1], ROLLING_WINDOW - hist.shape[0], axis=0)
        hist = np.vstack([pad, hist])
    current = hist[-1]
    rolling = hist[-ROLLING_WINDOW:].mean(axis=0)
    state = np.concatenate([current, np.asarray(forecast_row, dtype=float), rolling])
    if state.shape != (STATE_DIM,):
        raise AgentError(f"state vector has shape {state.shape}, expected ({STATE_DIM},)")
    return state


def make_qnetwork(seed: int, hidden=(64, 64), state_dim: int = STATE_DIM, n_actions: int = N_ACTIONS) -> nn.Mlp:
    return nn.Mlp((state_dim, *hidden, n_actions), seed=seed)


def select_action(q: nn.Mlp, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy with lowest-index tie-break on the greedy arm."""
    if not 0.0 <= epsilon <= 1.0:
        raise AgentError("epsilon must be in [0, 1]")
    n_actions = q.sizes[-1]
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, n_actions))
    return int(np.argmax(q.forward(np.asarray(state, dtype=float))))


def dqn_target(r, next_state, terminal, online: nn.Mlp, target: nn.Mlp, gamma: float) -> float:
    """Double-DQN target: online net picks the action, target net scores it."""
    if not 0.0 <= gamma < 1.0:
        raise AgentError("gamma must be in [0, 1)")
    if terminal:
        return float(r)
    next_state = np.asarray(next_state, dtype=float)
    best = int(np.argmax(online.forward(next_state)))
    return float(r) + gamma * float(target.forward(next_state)[best])


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise AgentError("capacity must be positive")
        self.capacity = capacity
        self._items = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, state, action_id, r, next_state, terminal) -> None:
        item = (np.asarray(state, float), int(action_id), float(r), np.asarray(next_state, float), bool(terminal))
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def __contains__(self, transition) -> bool:
        s, a, r, ns, t = transition
        return any(
            a == ia and r == ir and t == it and np.array_equal(s, istate) and np.array_equal(ns, inext)
            for istate, ia, ir, inext, it in self._items
        )

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


@dataclass
class AgentHyperparams:
    gamma: float = 0.95
    buffer_capacity: int = 10_000
    batch_size: int = 64
    sync_every: int = 250
    lr: float = 0.001
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    hidden_sizes: tuple = (64, 64)
    episodes: int = 4
    warmup_steps: int = 200
    gradient_clip: float = 5.0
    momentum: float = 0.9


def epsilon_at(step: int, total_steps: int, start: float = 1.0, final: float = 0.05) -> float:
    """Linear decay from start to final over the first half of training."""
    decay_steps = max(total_steps // 2, 1)
    frac = min(step / decay_steps, 1.0)
    return start + (final - start) * frac


def fit_dqn(env, state_dim: int, n_actions: int, hp: AgentHyperparams, seed: int):
    """Train a double DQN on any env exposing reset() and step(action_id).

    env.reset() -> state; env.step(a) -> (next_state, reward, done).
    Returns (online network, per-episode return log).
    """
    rng = np.random.default_rng(seed)
    online = nn.Mlp((state_dim, *hp.hidden_sizes, n_actions), seed=seed)
    target = online.copy()
    buffer = ReplayBuffer(hp.buffer_capacity)
    opt = nn.MomentumSgd(online.params(), momentum=hp.momentum, clip_norm=hp.gradient_clip)

    total_steps = hp.episodes * env.episode_length
    log = []
    global_step = 0
    for _ in range(hp.episodes):
        state = env.reset()
        ep_return = 0.0
        done = False
        while not done:
            eps = epsilon_at(global_step, total_steps, hp.epsilon_start, hp.epsilon_final)
            action = select_action(online, state, eps, rng)
            next_state, r, done = env.step(action)
            buffer.push(state, action, r, next_state, done)
            state = next_state
            ep_return += r
            global_step += 1

            if len(buffer) >= max(hp.batch_size, hp.warmup_steps):
                batch = buffer.sample(hp.batch_size, rng)
                _td_update(online, target, batch, hp, opt)
            if global_step % hp.sync_every == 0:
                target.load_from(online)
        log.append(ep_return)
    return online, log


def _td_update(online: nn.Mlp, target: nn.Mlp, batch, hp: AgentHyperparams, opt: nn.MomentumSgd):
    states = np.stack([b[0] for b in batch])
    actions = np.array([b[1] for b in batch])
    rewards = np.array([b[2] for b in batch])
    next_states = np.stack([b[3] for b in batch])
    terminals = np.array([b[4] for b in batch])

    q_next_online = _batch_forward(online, next_states)
    q_next_target = _batch_forward(target, next_states)
    best = np.argmax(q_next_online, axis=1)
    targets = rewards + hp.gamma * (~terminals) * q_next_target[np.arange(len(batch)), best]

    q, acts = online.forward_cached(states)
    td = q[np.arange(len(batch)), actions] - targets
    loss = float(np.mean(td * td))
    if not np.isfinite(loss):
        raise AgentError("TD loss diverged (NaN); lower the learning rate")
    dout = np.zeros_like(q)
    dout[np.arange(len(batch)), actions] = 2.0 * td / len(batch)
    dw, db = online.backward(acts, dout)
    grads = {}
    for i in range(len(dw)):
        grads[f"fc{i}.W"] = dw[i]
        grads[f"fc{i}.b"] = db[i]
    opt.step(grads, hp.lr)
    return loss


def _batch_forward(net: nn.Mlp, states: np.ndarray) -> np.ndarray:
    out, _ = net.forward_cached(states)
    return out


class ClusterSchedulingEnv:
    """Gym-style adapter: drives the simulator over a trace, one episode = one pass."""

    def __init__(
        self,
        frame: TraceFrame,
        cfg: simenv.EnvConfig = None,
        constraints: simenv.ConstraintSet = None,
        weights: RewardWeights = None,
        seed: int = 0,
    ):
        self.frame = frame
        self.cfg = cfg or simenv.EnvConfig()
        self.constraints = constraints or simenv.ConstraintSet()
        self.weights = weights or RewardWeights(1.0, 1.0, 1.0)
        self.seed = seed
        self.episode_length = frame.n_ticks
        self._storage = frame.column("storage_util")
        self.reset()

    def reset(self) -> np.ndarray:
        self.state = simenv.init_cluster(
            self.cfg.n_nodes,
            self.cfg.node_cpu,
            self.cfg.node_mem,
            self.cfg.initial_vms,
            self.seed,
            self.cfg.vm_cores,
        )
        self.tick = 0
        self._observed = [simenv.observed_metrics_row(self.frame.data[0], self.state, self.cfg)]
        return self._encode()

    def _encode(self) -> np.ndarray:
        forecast_row = self.frame.data[min(self.tick + 1, self.frame.n_ticks - 1)]
        return encode_state(np.asarray(self._observed), forecast_row)

    def step(self, action_id: int):
        action = Action.from_id(action_id)
        demand = simenv.offered_load(self.frame, self.tick, self.cfg.work_per_request)
        self.state, obs = simenv.step(
            self.state, demand, action, self.cfg, storage_io=float(self._storage[self.tick])
        )
        u, p, c = simenv.reward_components(obs, self.cfg, self.constraints)
        r = reward(u, p, c, self.weights)
        self.tick += 1
        done = self.tick >= self.frame.n_ticks
        if not done:
            self._observed.append(
                simenv.observed_metrics_row(self.frame.data[self.tick], self.state, self.cfg)
            )
        return self._encode(), r, done


def train_agent(
    frame: TraceFrame,
    cfg: simenv.EnvConfig = None,
    constraints: simenv.ConstraintSet = None,
    weights: RewardWeights = None,
    hp: AgentHyperparams = None,
    seed: int = 0,
):
    """Train the scheduling DQN on a workload trace. Returns (network, log)."""
    hp = hp or AgentHyperparams()
    env = ClusterSchedulingEnv(frame, cfg, constraints, weights, seed)
    if env.episode_length == 0:
        raise AgentError("frame too short for a training episode")
    return fit_dqn(env, STATE_DIM, N_ACTIONS, hp, seed)


class DqnPolicy:
    """Greedy policy over a trained Q-network, usable by simenv.run_episode."""

    name = "dqn"

    def __init__(self, q: nn.Mlp):
        self.q = q

    def __call__(self, ctx: simenv.PolicyContext) -> Action:
        state = encode_state(ctx.history, ctx.forecast_row)
        return Action.from_id(int(np.argmax(self.q.forward(state))))


def static_policy(ctx) -> Action:
    return NOOP


class ThresholdReactivePolicy:
    """Reactive rebalancing with forecast-driven advance reservations.

    Migrates one level when node imbalance exceeds the 20% bound, books an
    expand reservation `lead` ticks ahead when the forecast utilization
    crosses the CPU ceiling, contracts when current utilization is low.
    """

    name = "threshold_reactive"

    def __init__(self, constraints: simenv.ConstraintSet = None, contract_below: float = 0.4, lead: int = 3):
        self.constraints = constraints or simenv.ConstraintSet()
        self.contract_below = contract_below
        self.lead = lead

    def __call__(self, ctx: simenv.PolicyContext) -> Action:
        if ctx.imbalance > self.constraints.max_node_imbalance:
            return Action(ActionKind.MIGRATE, 1)
        if ctx.forecast_util > self.constraints.cpu_max:
            return Action(ActionKind.EXPAND, 1, delay=self.lead)
        if ctx.cpu_util < self.contract_below:
            return Action(ActionKind.CONTRACT, 1)
        return NOOP


def baseline_policy(kind: str, constraints: simenv.ConstraintSet = None):
    if kind == "static":
        return static_policy
    if kind == "threshold_reactive":
        return ThresholdReactivePolicy(constraints)
    raise AgentError(f"unknown baseline policy {kind!r}")


def simplex_grid(step: float = 0.1):
    """All non-negative weight triples summing to 1 on a regular grid."""
    n = round(1.0 / step)
    out = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            out.append((i / n, j / n, k / n))
    return out


def grid_search_weights(
    candidates,
    frame: TraceFrame,
    eval_frame: TraceFrame = None,
    cfg: simenv.EnvConfig = None,
    constraints: simenv.ConstraintSet = None,
    hp: AgentHyperparams = None,
    seed: int = 0,
    objective_weights=None,
):
    """Score each reward-weight candidate by a short seeded training run.

    Every candidate trains with the same seed, then its greedy policy is run
    on the held-out frame and scored with the multi-objective function under
    fixed equal weights, decoupling the searched reward weights from the
    scoring metric. Returns (best RewardWeights, score table).
    """
    from .optimize import ObjectiveInputs, ObjectiveWeights, objective_f
    from .report import sla_rate

    candidates = list(candidates)
    if not candidates:
        raise AgentError("need at least one candidate")
    cfg = cfg or simenv.EnvConfig()
    constraints = constraints or simenv.ConstraintSet()
    hp = hp or AgentHyperparams(episodes=1)
    eval_frame = eval_frame if eval_frame is not None else frame
    scoring = objective_weights or ObjectiveWeights(1.0, 1.0, 1.0)

    table = []
    best = None
    for triple in candidates:
        w = RewardWeights(*triple)
        q, _ = train_agent(frame, cfg, constraints, w, hp, seed)
        trace = simenv.run_episode(
            eval_frame, DqnPolicy(q), constraints, seed=seed, cfg=cfg, reward_weights=w
        )
        u = float(np.mean(trace.cpu_util))
        max_vms = cfg.n_nodes * int(cfg.node_cpu // cfg.vm_cores)
        cost = float(np.mean(trace.active_vms)) / max_vms if max_vms else 0.0
        quality = sla_rate(trace.latency_ms, constraints.p99_latency_max)
        score = objective_f(ObjectiveInputs(u, cost, quality), scoring)
        table.append({"weights": w.as_tuple(), "score": score})
        if best is None or score > best[1]:
            best = (w, score)
    return best[0], table


def save_agent(q: nn.Mlp, path, epsilon_final: float = 0.05, gamma: float = 0.95, weights: RewardWeights = None) -> None:
    w = weights or RewardWeights(1.0, 1.0, 1.0)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "sizes": list(q.sizes),
        "epsilon_final": epsilon_final,
        "gamma": gamma,
        "weights": list(w.as_tuple()),
        "tensors": nn.tensors_to_json(q.params()),
    }
    nn.dump_checkpoint(path, payload)


def load_agent(path):
    payload = nn.load_checkpoint(path, CHECKPOINT_VERSION)
    q = nn.Mlp(tuple(payload["sizes"]), seed=0)
    tensors = nn.tensors_from_json(payload["tensors"])
    for name, param in q.params().items():
        param[...] = tensors[name]
    meta = {
        "epsilon_final": payload["epsilon_final"],
        "gamma": payload["gamma"],
        "weights": RewardWeights(*payload["weights"]),
    }
    return q, meta
