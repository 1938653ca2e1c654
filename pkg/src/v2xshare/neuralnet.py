"""Minimal differentiable MLP substrate for the actor and critic.

A network is a flat, ordered list of float64 weight/bias arrays plus an
architecture descriptor. Keeping parameters as plain arrays makes the
outer-loop parameter averaging an exact element-wise operation and keeps
training bit-reproducible. Hidden layers are ReLU; the actor head is a
softmax over actions, the critic head a scalar (optionally multiplied by
a fixed output scale so that value targets in the thousands stay
reachable at small learning rates).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HIDDEN_LAYERS = (500, 250, 120)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
HEAD_INIT_SCALE = 1e-3

CHECKPOINT_FORMAT = "mlp-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ParameterSet:
    """Ordered weights [W0, b0, W1, b1, ...] with their layer sizes.

    Arithmetic is exact element-wise; instances are treated as immutable
    by convention (ops return new sets).
    """

    layer_sizes: tuple
    arrays: list
    out_scale: float = 1.0

    def copy(self):
        return ParameterSet(self.layer_sizes, [a.copy() for a in self.arrays], self.out_scale)

    def _check_like(self, other):
        if self.layer_sizes != other.layer_sizes or len(self.arrays) != len(other.arrays):
            raise ValueError("parameter sets have different architectures")

    def __add__(self, other):
        self._check_like(other)
        return ParameterSet(
            self.layer_sizes, [a + b for a, b in zip(self.arrays, other.arrays)], self.out_scale
        )

    def __sub__(self, other):
        self._check_like(other)
        return ParameterSet(
            self.layer_sizes, [a - b for a, b in zip(self.arrays, other.arrays)], self.out_scale
        )

    def __mul__(self, scalar):
        return ParameterSet(self.layer_sizes, [a * scalar for a in self.arrays], self.out_scale)

    __rmul__ = __mul__

    def zeros_like(self):
        return ParameterSet(
            self.layer_sizes, [np.zeros_like(a) for a in self.arrays], self.out_scale
        )

    def allequal(self, other):
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)
        )

    @property
    def n_parameters(self):
        return int(sum(a.size for a in self.arrays))

    @property
    def in_dim(self):
        return self.layer_sizes[0]

    @property
    def out_dim(self):
        return self.layer_sizes[-1]


def init_params(layer_sizes, rng, out_scale=1.0, head_scale=HEAD_INIT_SCALE):
    """Fan-in scaled uniform init for ReLU hidden layers, small uniform head."""
    sizes = tuple(int(s) for s in layer_sizes)
    arrays = []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in = sizes[i]
        if i < n_layers - 1:
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = head_scale
        arrays.append(rng.uniform(-bound, bound, (sizes[i], sizes[i + 1])))
        arrays.append(np.zeros(sizes[i + 1]))
    return ParameterSet(sizes, arrays, out_scale)


def forward(params, x):
    """Raw network output and the activation cache for backward.

    x: (batch, in_dim). Output: (batch, out_dim) already multiplied by
    out_scale. Cache holds the input and every post-ReLU activation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != network input {params.in_dim}")
    h = x
    cache = [x]
    n_layers = len(params.layer_sizes) - 1
    for i in range(n_layers - 1):
        w, b = params.arrays[2 * i], params.arrays[2 * i + 1]
        h = np.maximum(h @ w + b, 0.0)
        cache.append(h)
    w, b = params.arrays[-2], params.arrays[-1]
    out = (h @ w + b) * params.out_scale
    return out, cache


def backward(params, cache, d_out):
    """Gradient of a scalar loss wrt every array, given dLoss/dOutput.

    d_out: (batch, out_dim), the gradient at the raw (scaled) output.
    Returns a list shaped like params.arrays.
    """
    grads = [None] * len(params.arrays)
    d = np.asarray(d_out, dtype=np.float64) * params.out_scale
    n_layers = len(params.layer_sizes) - 1
    for i in range(n_layers - 1, -1, -1):
        h_in = cache[i]
        w = params.arrays[2 * i]
        grads[2 * i] = h_in.T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        if i > 0:
            d = d @ w.T
            d *= cache[i] > 0.0
    return grads


def actor_log_probs(params, obs):
    """Log-softmax over actions, numerically shifted. (batch, n_actions)."""
    logits, _ = forward(params, obs)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def actor_probs(params, obs):
    """Action distribution per row; strictly positive, rows sum to 1."""
    return np.exp(actor_log_probs(params, obs))


def critic_values(params, obs):
    """Scalar state values, (batch,)."""
    out, _ = forward(params, obs)
    return out[:, 0]


@dataclass
class AdamState:
    """First/second moment estimates shaped like the parameter list."""

    m: list
    v: list
    step: int
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, params, learning_rate):
        return cls(
            m=[np.zeros_like(a) for a in params.arrays],
            v=[np.zeros_like(a) for a in params.arrays],
            step=0,
            learning_rate=learning_rate,
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam descent step; returns (params, state)."""
    if len(grads) != len(params.arrays):
        raise ValueError("gradient list does not match parameter list")
    t = state.step + 1
    lr = state.learning_rate
    b1, b2 = state.beta1, state.beta2
    new_arrays, new_m, new_v = [], [], []
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for a, g, m, v in zip(params.arrays, grads, state.m, state.v):
        if g.shape != a.shape:
            raise ValueError("gradient shape mismatch")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        a = a - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_arrays.append(a)
        new_m.append(m)
        new_v.append(v)
    return (
        ParameterSet(params.layer_sizes, new_arrays, params.out_scale),
        AdamState(new_m, new_v, t, lr, b1, b2, state.eps),
    )


def actor_architecture(obs_dim, n_actions, hidden=HIDDEN_LAYERS):
    return (obs_dim, *hidden, n_actions)


def critic_architecture(obs_dim, hidden=HIDDEN_LAYERS):
    return (obs_dim, *hidden, 1)


def checkpoint_dict(params, kind):
    """JSON-ready container; field order is part of the format.

    Keys, in order: format, version, kind, layer_sizes, out_scale,
    tensors (list of {name, shape, data} with data flattened row-major,
    ordered W0, b0, W1, b1, ...).
    """
    tensors = []
    for i, a in enumerate(params.arrays):
        name = ("W" if i % 2 == 0 else "b") + str(i // 2)
        tensors.append({"name": name, "shape": list(a.shape), "data": a.ravel().tolist()})
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "layer_sizes": list(params.layer_sizes),
        "out_scale": params.out_scale,
        "tensors": tensors,
    }


def params_from_checkpoint(d):
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a network checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    arrays = [
        np.asarray(t["data"], dtype=np.float64).reshape(t["shape"]) for t in d["tensors"]
    ]
    return ParameterSet(tuple(d["layer_sizes"]), arrays, float(d.get("out_scale", 1.0)))


def save_checkpoint(path, params, kind):
    with open(path, "w") as f:
        json.dump(checkpoint_dict(params, kind), f, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path):
    with open(path) as f:
        d = json.load(f)
    return params_from_checkpoint(d), d.get("kind", "")
