"""Propagation operators for the two views.

The topology view uses the symmetric renormalized adjacency of the input
graph; the feature view uses a cosine kNN graph built from node features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseGraph

DEFAULT_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class NormalizedGraph:
    underlying: SparseGraph
    self_loops_added: bool

    @property
    def n(self) -> int:
        return self.underlying.n


def normalize_adjacency(a: SparseGraph, self_loops: bool = True) -> NormalizedGraph:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.

    With ``self_loops=False`` the raw adjacency is normalized instead and
    isolated nodes keep an empty row.
    """
    if not a.is_structurally_symmetric():
        raise ValueError("adjacency must be symmetric")
    if a.nnz and np.any(a.edge_values != 1.0):
        raise ValueError("adjacency must be unweighted (all stored values 1)")
    g = a.add_self_loops() if self_loops else a
    deg = g.row_sums()
    inv_sqrt = np.zeros_like(deg)
    np.divide(1.0, np.sqrt(deg), out=inv_sqrt, where=deg > 0)
    rows = g.row_ids()
    vals = inv_sqrt[rows] * g.edge_values * inv_sqrt[g.col_indices]
    out = SparseGraph(g.n, g.row_offsets, g.col_indices, vals, undirected=True)
    return NormalizedGraph(out, self_loops)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    out = np.zeros_like(x)
    np.divide(x, norms, out=out, where=norms > 0)
    return out


def cosine_similarity_matrix(x: np.ndarray) -> np.ndarray:
    """Dense pairwise cosine similarity; zero-norm rows are 0 against everything."""
    if np.ndim(x) != 2 or x.shape[0] < 1:
        raise ValueError("features must be a 2-D matrix with at least one row")
    u = _unit_rows(x)
    s = u @ u.T
    # exact symmetry and unit diagonal, independent of BLAS rounding
    s = np.triu(s) + np.triu(s, 1).T
    np.fill_diagonal(s, (np.linalg.norm(x, axis=1) > 0).astype(np.float64))
    return s


def knn_neighbors(x: np.ndarray, k: int, block_size: int = DEFAULT_BLOCK) -> list[np.ndarray]:
    """Per-node selected neighbor sets (before symmetrization).

    Ties are broken towards the lower node index. Zero-norm rows neither
    select nor get selected.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    u = _unit_rows(x)
    nonzero = np.linalg.norm(x, axis=1) > 0
    chosen = []
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        s = u[start:stop] @ u.T
        s[:, ~nonzero] = -np.inf
        s[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # stable sort on the negated score keeps index order among ties
        order = np.argsort(-s, axis=1, kind="stable")[:, :k]
        for r in range(stop - start):
            if not nonzero[start + r]:
                chosen.append(np.empty(0, dtype=np.int64))
                continue
            sel = order[r]
            chosen.append(np.sort(sel[np.isfinite(s[r, sel])]))
    return chosen


def build_knn_graph(x: np.ndarray, k: int, block_size: int = DEFAULT_BLOCK) -> SparseGraph:
    """Unweighted symmetric kNN graph (union of both directions, no self-loops)."""
    n = np.shape(x)[0]
    chosen = knn_neighbors(x, k, block_size)
    src = np.concatenate([np.full(c.size, i, dtype=np.int64) for i, c in enumerate(chosen)])
    dst = np.concatenate(chosen).astype(np.int64)
    pairs = np.unique(np.concatenate([np.stack([src, dst], 1), np.stack([dst, src], 1)]), axis=0)
    return SparseGraph.from_edges(n, pairs[:, 0], pairs[:, 1], undirected=True)
