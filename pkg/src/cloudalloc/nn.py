"""Small shared neural-network plumbing used by forecast and agent.

Everything is plain numpy with explicit forward/backward passes so that
gradients can be checked against finite differences.
"""
from __future__ import annotations

import json

import numpy as np


def sigmoid(x):
    # numerically stable piecewise form
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Mlp:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, sizes, seed: int):
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        self.sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for din, dout in zip(self.sizes[:-1], self.sizes[1:]):
            self.weights.append(uniform_init(rng, (din, dout), din))
            self.biases.append(np.zeros(dout))

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(np.atleast_2d(x))
        return out[0] if x.ndim == 1 else out

    def forward_cached(self, x: np.ndarray):
        acts = [x]
        h = x
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < n - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, dout):
        """Gradients of a scalar loss given d(loss)/d(output)."""
        dw = [None] * len(self.weights)
        db = [None] * len(self.biases)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                delta = delta * (acts[i + 1] > 0)
            dw[i] = acts[i].T @ delta
            db[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return dw, db

    def params(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"fc{i}.W"] = w
            out[f"fc{i}.b"] = b
        return out

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def load_from(self, other: "Mlp") -> None:
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]


class MomentumSgd:
    """SGD with classical momentum and global gradient-norm clipping."""

    def __init__(self, params: dict, momentum: float = 0.9, clip_norm: float = 5.0):
        self.params = params
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict, lr: float) -> None:
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                scale = self.clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        for name, p in self.params.items():
            v = self.velocity[name]
            v *= self.momentum
            v -= lr * grads[name]
            p += v


def global_grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


def tensors_to_json(tensors: dict) -> list:
    return [
        {"name": name, "shape": list(arr.shape), "values": np.asarray(arr).ravel().tolist()}
        for name, arr in tensors.items()
    ]


def tensors_from_json(entries: list) -> dict:
    out = {}
    for entry in entries:
        arr = np.asarray(entry["values"], dtype=float).reshape(entry["shape"])
        out[entry["name"]] = arr
    return out


def dump_checkpoint(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, expected_version: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != expected_version:
        raise ValueError(f"unknown checkpoint format_version {version!r}, expected {expected_version!r}")
    return payload
