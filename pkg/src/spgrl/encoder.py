"""Two-layer GCN encoder with an explicit backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedGraph
from .linalg import dropout, relu, spmm


@dataclass
class GcnParams:
    w0: np.ndarray  # (d, h1)
    w1: np.ndarray  # (h1, h2)

    def as_dict(self, prefix=""):
        return {f"{prefix}w0": self.w0, f"{prefix}w1": self.w1}


@dataclass
class ForwardCache:
    graph: NormalizedGraph
    x_drop: np.ndarray       # dropped input to layer 0
    gx: np.ndarray           # G @ x_drop
    pre0: np.ndarray         # G @ x_drop @ w0
    relu0_mask: np.ndarray
    drop1_mask: np.ndarray   # scaled dropout mask on the hidden layer
    gh: np.ndarray           # G @ h_drop
    pre1: np.ndarray         # layer-1 output before the optional final ReLU
    w1: np.ndarray
    final_relu: bool


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float64):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype, copy=False)


def init_gcn_params(d: int, h1: int, h2: int, rng: np.random.Generator, dtype=np.float64) -> GcnParams:
    if min(d, h1, h2) < 1:
        raise ValueError(f"dimensions must be >= 1, got d={d}, h1={h1}, h2={h2}")
    return GcnParams(glorot_uniform(d, h1, rng, dtype), glorot_uniform(h1, h2, rng, dtype))


def gcn_forward(params: GcnParams, g: NormalizedGraph, x: np.ndarray, dropout_p: float = 0.0,
                rng: np.random.Generator | None = None, training: bool = False,
                final_relu: bool = False):
    """``z = G relu(G drop(x) W0) W1``; dropout hits each layer's input in training mode."""
    if g.n != x.shape[0]:
        raise ValueError(f"graph has {g.n} nodes but features have {x.shape[0]} rows")
    if x.shape[1] != params.w0.shape[0]:
        raise ValueError(f"feature width {x.shape[1]} does not match w0 {params.w0.shape}")
    if params.w0.shape[1] != params.w1.shape[0]:
        raise ValueError(f"w0 {params.w0.shape} and w1 {params.w1.shape} are incompatible")
    if training and dropout_p > 0 and rng is None:
        raise ValueError("an rng is required for training-mode dropout")
    op = g.underlying

    x_drop, _ = dropout(x, dropout_p, rng, training)
    gx = spmm(op, x_drop)
    pre0 = gx @ params.w0
    h, relu0_mask = relu(pre0)
    h_drop, drop1_mask = dropout(h, dropout_p, rng, training)
    gh = spmm(op, h_drop)
    pre1 = gh @ params.w1
    z = relu(pre1)[0] if final_relu else pre1
    cache = ForwardCache(g, x_drop, gx, pre0, relu0_mask, drop1_mask, gh, pre1, params.w1, final_relu)
    return z, cache


def gcn_backward(cache: ForwardCache, grad_z: np.ndarray):
    """Gradients of a scalar loss w.r.t. ``(w0, w1)`` given dL/dz."""
    if grad_z.shape != cache.pre1.shape:
        raise ValueError(f"grad_z shape {grad_z.shape} does not match output {cache.pre1.shape}")
    op = cache.graph.underlying
    g1 = grad_z * (cache.pre1 > 0) if cache.final_relu else grad_z
    grad_w1 = cache.gh.T @ g1
    grad_h = spmm(op, g1 @ cache.w1.T, transpose=True) * cache.drop1_mask
    grad_pre0 = grad_h * cache.relu0_mask
    grad_w0 = cache.gx.T @ grad_pre0
    return grad_w0, grad_w1
