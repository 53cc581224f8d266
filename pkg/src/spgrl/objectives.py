"""Loss heads and their gradients.

* cross-view contrastive loss over cosine similarities,
* Bernoulli inner-product reconstruction of a graph from an embedding,
  used crosswise ("exchange") between the two views,
* softmax cross-entropy of a linear classifier on the concatenated views,
* the weighted combination selected by an ablation variant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import SparseGraph, row_log_softmax, softplus

VARIANTS = ("full", "spgrl1", "spgrl2", "spgrl3")
NORM_FLOOR = 1e-12
RECON_BLOCK = 2048


class ClampCounter:
    """Counts rows whose norm had to be clamped in the contrastive loss."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


norm_clamps = ClampCounter()


@dataclass
class LossReport:
    total: float
    l_cl: float
    l_re: float
    l_cr: float
    alpha: float
    beta: float

    def as_dict(self):
        return {k: float(v) for k, v in vars(self).items()}


@dataclass
class ClassifierParams:
    b: np.ndarray  # (2*h2, M)
    a: np.ndarray  # (M,)


def _normalize_rows(z):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    small = norms < NORM_FLOOR
    if np.any(small):
        norm_clamps.count += int(small.sum())
        warnings.warn(f"{int(small.sum())} embedding rows with norm below {NORM_FLOOR} clamped",
                      RuntimeWarning, stacklevel=3)
        norms = np.maximum(norms, NORM_FLOOR)
    return z / norms, norms


def _normalize_rows_backward(grad_u, u, norms):
    # u = z / |z|  =>  dz = (du - u <u, du>) / |z|
    return (grad_u - u * np.sum(u * grad_u, axis=1, keepdims=True)) / norms


def _logsumexp(s, axis):
    m = s.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(s - m).sum(axis=axis))


def _softmax(s, axis):
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def contrastive_loss(zt: np.ndarray, zf: np.ndarray, temperature: float = 1.0):
    """Two-directional cross-view loss; the positive for node i is its own other-view embedding.

    Only cross-view negatives enter the denominators. Returns
    ``(loss, grad_zt, grad_zf)``.
    """
    if zt.shape != zf.shape:
        raise ValueError(f"view shapes differ: {zt.shape} vs {zf.shape}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    ut, nt = _normalize_rows(zt)
    uf, nf = _normalize_rows(zf)
    # s[i, j] = sim(zt_i, zf_j); first direction is row-wise, second column-wise
    s = (ut @ uf.T) / temperature
    diag = np.diag(s)
    loss = float(np.sum(_logsumexp(s, 1) - diag) + np.sum(_logsumexp(s, 0) - diag))

    grad_s = _softmax(s, 1) + _softmax(s, 0)
    grad_s[np.diag_indices_from(grad_s)] -= 2.0
    grad_s /= temperature
    grad_zt = _normalize_rows_backward(grad_s @ uf, ut, nt)
    grad_zf = _normalize_rows_backward(grad_s.T @ ut, uf, nf)
    return loss, grad_zt, grad_zf


def bernoulli_terms(logits, target, pos_weight=1.0, sp=None):
    """Elementwise negative log-likelihood of ``target`` under sigmoid(logits).

    Uses softplus(-x) = softplus(x) - x so only one softplus is evaluated;
    pass ``sp`` to reuse a precomputed softplus(logits).
    """
    if sp is None:
        sp = softplus(logits)
    wa = pos_weight * target
    return sp * (1.0 - target + wa) - wa * logits


def _dense_rows(target: SparseGraph, start: int, stop: int, dtype) -> np.ndarray:
    block = np.zeros((stop - start, target.n), dtype=dtype)
    lo, hi = target.row_offsets[start], target.row_offsets[stop]
    rows = target.row_ids()[lo:hi] - start
    block[rows, target.col_indices[lo:hi]] = target.edge_values[lo:hi]
    return block


def reconstruction_loss(z: np.ndarray, target: SparseGraph, pos_weight: float = 1.0,
                        normalize: bool = True, block_size: int = RECON_BLOCK):
    """Bernoulli NLL of every ordered pair (i, j) of ``target`` under sigmoid(z_i . z_j).

    Stored entries of ``target`` are the edge indicators; the diagonal counts
    as an edge only if ``target`` stores it. Averaged over N^2 pairs when
    ``normalize``. Rows are processed in blocks so memory stays O(block * N).
    """
    n = z.shape[0]
    if target.n != n:
        raise ValueError(f"embedding has {n} rows but target graph has {target.n} nodes")
    pairs = float(n * n) if normalize else 1.0
    total = 0.0
    grad = np.zeros_like(z)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        logits = z[start:stop] @ z.T
        a = _dense_rows(target, start, stop, z.dtype)
        sp = softplus(logits)
        total += float(np.sum(bernoulli_terms(logits, a, pos_weight, sp)))
        # d/dx of the term: (1 - a) sigma(x) - w a (1 - sigma(x))
        wa = pos_weight * a
        g = np.exp(logits - sp) * (1.0 - a + wa) - wa
        grad[start:stop] += g @ z
        grad += g.T @ z[start:stop]
    return total / pairs, grad / pairs


def positive_class_weight(target: SparseGraph) -> float:
    """(#non-edges) / (#edges) over all N^2 ordered pairs."""
    edges = float(target.edge_values.sum())
    if edges == 0:
        return 1.0
    return (target.n * target.n - edges) / edges


def exchange_reconstruction(zt, zf, a: SparseGraph, a_hat: SparseGraph, exchange: bool = True,
                            pos_weight: float | None = 1.0, normalize: bool = True):
    """Topology embedding reconstructs the feature graph and vice versa.

    ``exchange=False`` gives the self-reconstruction ablation (zt -> a,
    zf -> a_hat). ``pos_weight=None`` uses the per-graph non-edge/edge ratio.
    Returns ``(l_re, grad_zt, grad_zf)``.
    """
    if not (zt.shape[0] == zf.shape[0] == a.n == a_hat.n):
        raise ValueError("node counts of embeddings and graphs must agree")
    target_t, target_f = (a_hat, a) if exchange else (a, a_hat)
    wt = positive_class_weight(target_t) if pos_weight is None else pos_weight
    wf = positive_class_weight(target_f) if pos_weight is None else pos_weight
    lt, gt = reconstruction_loss(zt, target_t, wt, normalize)
    lf, gf = reconstruction_loss(zf, target_f, wf, normalize)
    return lt + lf, gt, gf


def classification_loss(r: np.ndarray, params: ClassifierParams, labels: np.ndarray, train_mask: np.ndarray):
    """Summed cross-entropy over the masked nodes.

    Returns ``(loss, grad_r, grad_b, grad_a, probabilities)`` with
    probabilities for every node.
    """
    labels = np.asarray(labels)
    mask = np.asarray(train_mask, dtype=bool)
    if not (r.shape[0] == labels.shape[0] == mask.shape[0]):
        raise ValueError("r, labels and mask must have the same number of rows")
    if not mask.any():
        raise ValueError("no labeled nodes")
    m = params.b.shape[1]
    idx = np.flatnonzero(mask)
    y = labels[idx]
    if np.any((y < 0) | (y >= m)):
        raise ValueError(f"training labels must lie in [0, {m})")
    logits = r @ params.b + params.a
    logp = row_log_softmax(logits)
    probs = np.exp(logp)
    loss = float(-np.sum(logp[idx, y]))

    grad_logits = np.zeros_like(logits)
    grad_logits[idx] = probs[idx]
    grad_logits[idx, y] -= 1.0
    grad_b = r.T @ grad_logits
    grad_a = grad_logits.sum(axis=0)
    grad_r = grad_logits @ params.b.T
    return loss, grad_r, grad_b, grad_a, probs


def loss_weights(variant: str, alpha: float, beta: float) -> tuple[float, float]:
    """Effective (reconstruction, contrastive) weights for an ablation variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    if variant == "spgrl1":
        return 0.0, 0.0
    if variant == "spgrl2":
        return 0.0, beta
    return alpha, beta


def total_loss(l_cl: float, l_re: float, l_cr: float, alpha: float, beta: float,
               variant: str = "full") -> LossReport:
    """Combine the heads. For ``spgrl3`` pass the self-reconstruction value as ``l_re``."""
    wa, wb = loss_weights(variant, alpha, beta)
    return LossReport(l_cl + wa * l_re + wb * l_cr, l_cl, l_re, l_cr, wa, wb)
