"""Feedforward maintenance policy with deterministic evaluation and input saliency.

The network is a plain ReLU MLP in float64.  Observations are the state
variables rescaled to [0, 1] with the declared variable ranges; the scaling
is stored with the weights so a checkpoint is self-contained.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from policymc.errors import PolicyError

CHECKPOINT_FORMAT = "policymc-checkpoint/1"


@dataclass
class PolicyNet:
    weights: list[np.ndarray]  # layer k maps dims[k] -> dims[k+1], shape (in, out)
    biases: list[np.ndarray]
    actions: tuple[str, ...]
    var_names: tuple[str, ...]
    low: np.ndarray
    width: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise PolicyError("weights and biases must be nonempty lists of equal length")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise PolicyError(f"layer {k}: weight {w.shape} does not match bias {b.shape}")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise PolicyError(f"layer {k} input {w.shape[0]} does not match previous output")
        if self.weights[0].shape[0] != len(self.var_names):
            raise PolicyError("input dimension must equal the number of state variables")
        if self.weights[-1].shape[1] != len(self.actions):
            raise PolicyError("output dimension must equal the number of actions")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @classmethod
    def init_random(cls, var_names, low, high, actions, hidden: Sequence[int], rng: np.random.Generator, metadata=None):
        """He-style uniform init scaled by fan-in; output layer scaled down."""
        dims = [len(var_names), *hidden, len(actions)]
        weights, biases = [], []
        for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / fan_in) if k < len(dims) - 2 else 0.01 * np.sqrt(3.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        low = np.asarray(low, dtype=np.float64)
        width = np.asarray(high, dtype=np.float64) - low
        return cls(weights, biases, tuple(actions), tuple(var_names), low, width, dict(metadata or {}))

    @classmethod
    def constant(cls, var_names, low, high, actions, choice: str):
        """Zero-weight network whose argmax is always ``choice``."""
        d, a = len(var_names), len(actions)
        bias = np.zeros(a)
        bias[list(actions).index(choice)] = 1.0
        low = np.asarray(low, dtype=np.float64)
        return cls([np.zeros((d, a))], [bias], tuple(actions), tuple(var_names), low,
                   np.asarray(high, dtype=np.float64) - low, {"kind": f"constant:{choice}"})

    @classmethod
    def for_model(cls, mdp, hidden, rng, metadata=None):
        return cls.init_random(mdp.var_names, mdp.low, mdp.high, mdp.actions, hidden, rng, metadata)

    def observe(self, valuations: np.ndarray) -> np.ndarray:
        """Normalize raw integer valuations to [0, 1] features."""
        vals = np.asarray(valuations, dtype=np.float64)
        safe = np.where(self.width > 0, self.width, 1.0)
        return np.where(self.width > 0, (vals - self.low) / safe, 0.0)

    def copy(self) -> "PolicyNet":
        return PolicyNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.actions,
                         self.var_names, self.low.copy(), self.width.copy(), dict(self.metadata))


def _forward_cache(net: PolicyNet, x: np.ndarray):
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if k < last else z
        acts.append(h)
    return acts


def forward(net: PolicyNet, obs: np.ndarray) -> np.ndarray:
    """Pre-softmax action scores for one observation (d,) or a batch (n, d)."""
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.shape[1] != net.n_features:
        raise PolicyError(f"observation has {x2.shape[1]} features, network expects {net.n_features}")
    out = _forward_cache(net, x2)[-1]
    return out[0] if single else out


def backward(net: PolicyNet, acts: list[np.ndarray], grad_out: np.ndarray):
    """Backpropagate ``grad_out`` (n, n_actions); return (weight grads, bias grads, input grad)."""
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    g = grad_out
    for k in range(len(net.weights) - 1, -1, -1):
        if k < len(net.weights) - 1:
            g = g * (acts[k + 1] > 0)
        gw[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        g = g @ net.weights[k].T
    return gw, gb, g


def select_action(net_or_scores, obs=None, feasible: Sequence[int] = ()) -> int:
    """Argmax over the global action set, falling back to ``feasible[0]`` if infeasible.

    Accepts either ``(net, obs, feasible)`` or ``(scores, None, feasible)``.
    Ties go to the lowest action index.
    """
    if isinstance(net_or_scores, PolicyNet):
        scores = forward(net_or_scores, obs)
    else:
        scores = np.asarray(net_or_scores, dtype=np.float64)
    if len(feasible) == 0:
        raise PolicyError("feasible action list is empty")
    best = int(np.argmax(scores))
    return best if best in feasible else int(feasible[0])


def select_actions_batch(scores: np.ndarray, enabled: np.ndarray) -> np.ndarray:
    """Vectorized :func:`select_action`; ``enabled`` is an (n, n_actions) mask.

    Action ids are lexicographic ranks, so the first feasible action is the
    lowest enabled id.
    """
    best = np.argmax(scores, axis=1)
    ok = enabled[np.arange(len(best)), best]
    first = np.argmax(enabled, axis=1)
    return np.where(ok, best, first)


def saliency(net: PolicyNet, obs: np.ndarray, action=None) -> np.ndarray:
    """|d score[a*] / d feature| by reverse-mode differentiation.

    ``a*`` defaults to the argmax over all actions; pass ``action`` (int or
    per-row array) to use the action actually selected.
    """
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    acts = _forward_cache(net, x2)
    scores = acts[-1]
    if action is None:
        chosen = np.argmax(scores, axis=1)
    else:
        chosen = np.broadcast_to(np.asarray(action), (len(x2),))
    seed = np.zeros_like(scores)
    seed[np.arange(len(x2)), chosen] = 1.0
    _, _, g = backward(net, acts, seed)
    g = np.abs(g)
    return g[0] if single else g


# ---------------------------------------------------------------------------
# checkpoints


def _hex_list(a: np.ndarray) -> list:
    return [float(v).hex() for v in np.asarray(a, dtype=np.float64).ravel()]


def checkpoint_text(net: PolicyNet) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "dims": net.dims,
        "actions": list(net.actions),
        "features": list(net.var_names),
        "low": _hex_list(net.low),
        "width": _hex_list(net.width),
        "layers": [{"weight": _hex_list(w), "bias": _hex_list(b)} for w, b in zip(net.weights, net.biases)],
        "metadata": net.metadata,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_checkpoint(net: PolicyNet, path) -> None:
    from policymc.io import atomic_write

    atomic_write(path, checkpoint_text(net))


def load_checkpoint(path) -> PolicyNet:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise PolicyError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise PolicyError(f"{path} is not a policy checkpoint")
    unhex = lambda xs: np.array([float.fromhex(v) for v in xs])  # noqa: E731
    try:
        dims = doc["dims"]
        weights, biases = [], []
        for k, layer in enumerate(doc["layers"]):
            weights.append(unhex(layer["weight"]).reshape(dims[k], dims[k + 1]))
            biases.append(unhex(layer["bias"]))
        return PolicyNet(weights, biases, tuple(doc["actions"]), tuple(doc["features"]),
                         unhex(doc["low"]), unhex(doc["width"]), doc.get("metadata", {}))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise PolicyError(f"corrupt checkpoint {path}: {exc!r}") from exc
