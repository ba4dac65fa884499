"""Multi-objective allocation score and a particle swarm optimizer.

The scalar score F = w1*U - w2*C + w3*Q trades utilization against cost and
service quality; its weights are tuned by a standard box-constrained PSO with
positions projected onto the probability simplex before evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OptimizeError(ValueError):
    pass


@dataclass
class ObjectiveWeights:
    """Coefficients of the allocation score; normalized to sum to 1."""

    w1: float
    w2: float
    w3: float

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or self.w3 < 0:
            raise OptimizeError("objective weights must be non-negative")
        total = self.w1 + self.w2 + self.w3
        if total <= 0:
            raise OptimizeError("objective weights must not all be zero")
        self.w1, self.w2, self.w3 = self.w1 / total, self.w2 / total, self.w3 / total

    def as_tuple(self):
        return (self.w1, self.w2, self.w3)


@dataclass
class ObjectiveInputs:
    U: float  # weighted resource utilization
    C: float  # normalized operational cost
    Q: float  # service-quality score

    def __post_init__(self):
        for name, v in (("U", self.U), ("C", self.C), ("Q", self.Q)):
            if not 0.0 <= v <= 1.0:
                raise OptimizeError(f"objective input {name}={v} outside [0, 1]")


def objective_f(inputs: ObjectiveInputs, w: ObjectiveWeights) -> float:
    """F = w1*U - w2*C + w3*Q."""
    return w.w1 * inputs.U - w.w2 * inputs.C + w.w3 * inputs.Q


@dataclass
class PsoConfig:
    swarm_size: int = 30
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    bounds: tuple = ((-5.0, 5.0),)  # per-dimension (lo, hi)
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise OptimizeError("swarm_size must be >= 2")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise OptimizeError(f"invalid bound ({lo}, {hi})")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float


def pso_minimize(fitness, config: PsoConfig):
    """Standard global-best PSO with box clamping.

    Returns (best position, best fitness, per-iteration best-fitness history).
    The recorded history is non-increasing; identical (fitness, config) yield
    identical runs.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    dim = len(config.bounds)
    span = hi - lo

    def evaluate(x):
        v = float(fitness(x))
        if not np.isfinite(v):
            raise OptimizeError(f"non-finite fitness {v} at position {x.tolist()}")
        return v

    particles = []
    gbest_pos = None
    gbest_fit = np.inf
    for _ in range(config.swarm_size):
        pos = rng.uniform(lo, hi)
        vel = rng.uniform(-span, span) * 0.1
        fit = evaluate(pos)
        particles.append(Particle(pos, vel, pos.copy(), fit))
        if fit < gbest_fit:
            gbest_fit = fit
            gbest_pos = pos.copy()

    history = []
    for _ in range(config.iterations):
        for p in particles:
            r1 = rng.random(dim)
            r2 = rng.random(dim)
            p.velocity = (
                config.inertia * p.velocity
                + config.cognitive * r1 * (p.best_position - p.position)
                + config.social * r2 * (gbest_pos - p.position)
            )
            p.position = np.clip(p.position + p.velocity, lo, hi)
            fit = evaluate(p.position)
            if fit < p.best_fitness:
                p.best_fitness = fit
                p.best_position = p.position.copy()
            if fit < gbest_fit:
                gbest_fit = fit
                gbest_pos = p.position.copy()
        history.append(gbest_fit)
    return gbest_pos, gbest_fit, history


def project_to_simplex(x: np.ndarray) -> np.ndarray:
    """Clip negatives to zero and renormalize; all-zero maps to the centroid."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    total = x.sum()
    if total <= 0:
        return np.full(len(x), 1.0 / len(x))
    return x / total


def tune_objective_weights(harness, config: PsoConfig = None, return_history: bool = False):
    """Find the weight triple minimizing the harness's simulation score.

    The harness receives a simplex-projected (w1, w2, w3) and returns a scalar
    to minimize (e.g. normalized cost plus SLA penalty).
    """
    config = config or PsoConfig(bounds=((0.0, 1.0),) * 3)
    if len(config.bounds) != 3:
        raise OptimizeError("weight tuning needs 3-dimensional bounds")

    def fitness(x):
        w = project_to_simplex(x)
        try:
            return harness(tuple(w))
        except Exception as exc:
            raise OptimizeError(f"harness failed for weights {tuple(w)}: {exc}") from exc

    best_pos, _, history = pso_minimize(fitness, config)
    w = project_to_simplex(best_pos)
    weights = ObjectiveWeights(*w)
    if return_history:
        return weights, history
    return weights


def write_tuning_log(path, history, weights: ObjectiveWeights) -> None:
    """CSV log: iteration, best_fitness, w1, w2, w3 (final weights each row)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,best_fitness,w1,w2,w3\n")
        w1, w2, w3 = weights.as_tuple()
        for i, fit in enumerate(history):
            fh.write(f"{i},{repr(float(fit))},{repr(w1)},{repr(w2)},{repr(w3)}\n")
