"""Adam with coupled L2 weight decay, and a central-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptimHyper:
    learning_rate: float = 3e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              hyper: OptimHyper, decay: set[str] | None = None):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are not mutated.

    ``decay`` names the parameters receiving L2 weight decay (added to the
    gradient). By default every parameter except those ending in ``.a``
    (biases) is decayed.
    """
    if set(params) != set(grads):
        raise ValueError(f"parameter and gradient keys differ: {sorted(set(params) ^ set(grads))}")
    if decay is None:
        decay = {k for k in params if not k.endswith(".a")}
    t = state.t + 1
    bc1 = 1.0 - hyper.beta1 ** t
    bc2 = 1.0 - hyper.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        if k in decay and hyper.weight_decay:
            g = g + hyper.weight_decay * p
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"optimizer state for {k} does not match parameter shape {p.shape}")
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * (g * g)
        new_params[k] = p - hyper.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + hyper.epsilon)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(new_m, new_v, t)


def numerical_gradient(loss_at, params: dict[str, np.ndarray], eps: float = 1e-5):
    """Central differences of ``loss_at(params)`` for every entry of every parameter."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    probe = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out = {}
    for name, arr in probe.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = float(loss_at(probe))
            flat[i] = old - eps
            down = float(loss_at(probe))
            flat[i] = old
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while probing {name}[{i}]")
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = g
    return out


def relative_errors(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> dict[str, float]:
    """Max per-block relative error with denominator max(|a|, |n|, 1e-8)."""
    out = {}
    for k, a in analytic.items():
        n = numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        out[k] = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
    return out


def finite_difference_check(loss_at, params, analytic, eps: float = 1e-5, per_block: bool = False):
    """Largest relative error between ``analytic`` and central differences of ``loss_at``."""
    errors = relative_errors(analytic, numerical_gradient(loss_at, params, eps))
    return errors if per_block else max(errors.values(), default=0.0)
