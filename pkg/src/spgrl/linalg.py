"""Dense and sparse kernels shared by the rest of the package.

Dense matrices are plain 2-D ``numpy.ndarray`` values. Sparse adjacency
structures use :class:`SparseGraph`, a small immutable CSR container.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from threadpoolctl import threadpool_limits

DTYPES = {"f64": np.float64, "f32": np.float32}


@contextlib.contextmanager
def deterministic(enabled: bool = True):
    """Pin BLAS to a single thread so reductions run in a fixed order."""
    if not enabled:
        yield
        return
    with threadpool_limits(limits=1):
        yield


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """CSR adjacency over ``n`` nodes.

    Column indices are strictly increasing within each row. ``undirected``
    asserts structural symmetry and is checked on construction.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_values: np.ndarray
    undirected: bool = False
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.edge_values)
        if vals.dtype.kind != "f":
            vals = vals.astype(np.float64)
        if self.n < 0:
            raise ValueError(f"node count must be non-negative, got {self.n}")
        if offsets.shape != (self.n + 1,) or offsets[0] != 0 or offsets[-1] != cols.size:
            raise ValueError("row_offsets must have length n+1, start at 0 and end at nnz")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if cols.shape != vals.shape:
            raise ValueError("col_indices and edge_values must have equal length")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n):
            raise ValueError(f"column index out of range [0, {self.n})")
        # strictly increasing within rows: any non-increase must sit on a row boundary
        if cols.size > 1:
            bad = np.flatnonzero(np.diff(cols) <= 0) + 1
            starts = np.zeros(cols.size, dtype=bool)
            starts[offsets[:-1][offsets[:-1] < cols.size]] = True
            if np.any(~starts[bad]):
                raise ValueError("col_indices must be strictly increasing within each row")
        for name, arr in (("row_offsets", offsets), ("col_indices", cols), ("edge_values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        csr = sp.csr_matrix((vals, cols, offsets), shape=(self.n, self.n))
        object.__setattr__(self, "_csr", csr)
        if self.undirected and not self.is_structurally_symmetric():
            raise ValueError("graph flagged undirected but is not structurally symmetric")

    @classmethod
    def from_edges(cls, n, src, dst, values=None, undirected=False):
        """Build from COO triples. Duplicate (src, dst) pairs are rejected."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have equal length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError(f"node index out of range [0, {n})")
        vals = np.ones(src.size) if values is None else np.asarray(values, dtype=np.float64)
        order = np.lexsort((dst, src))
        src, dst, vals = src[order], dst[order], vals[order]
        if src.size > 1 and np.any((np.diff(src) == 0) & (np.diff(dst) == 0)):
            raise ValueError("duplicate edge entries")
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
        return cls(n, offsets, dst, vals, undirected=undirected)

    @classmethod
    def from_dense(cls, a, undirected=False):
        a = np.asarray(a)
        src, dst = np.nonzero(a)
        return cls.from_edges(a.shape[0], src, dst, a[src, dst], undirected=undirected)

    @classmethod
    def identity(cls, n):
        return cls(n, np.arange(n + 1), np.arange(n), np.ones(n), undirected=True)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=dtype)
        out[self.row_ids(), self.col_indices] = self.edge_values
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1)).ravel()

    def is_structurally_symmetric(self) -> bool:
        pattern = self._csr.copy()
        pattern.data = np.ones_like(pattern.data)
        return (pattern != pattern.T).nnz == 0

    def is_symmetric(self) -> bool:
        """Symmetric in both structure and value."""
        diff = (self._csr - self._csr.T).tocsr()
        diff.eliminate_zeros()
        return diff.nnz == 0

    def has_self_loops(self) -> bool:
        return bool(np.any(self.row_ids() == self.col_indices))

    def edge_set(self) -> set[tuple[int, int]]:
        return set(zip(self.row_ids().tolist(), self.col_indices.tolist()))

    def permute(self, perm) -> "SparseGraph":
        """Relabel node ``perm[i]`` as node ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return SparseGraph.from_edges(self.n, inv[self.row_ids()], inv[self.col_indices],
                                      self.edge_values, undirected=self.undirected)

    def add_self_loops(self) -> "SparseGraph":
        """Return A + I (diagonal set to 1 where absent, kept where present)."""
        rows, cols = self.row_ids(), self.col_indices
        missing = np.setdiff1d(np.arange(self.n), rows[rows == cols])
        return SparseGraph.from_edges(
            self.n,
            np.concatenate([rows, missing]),
            np.concatenate([cols, missing]),
            np.concatenate([self.edge_values, np.ones(missing.size)]),
            undirected=self.undirected,
        )


def _check_2d(x, name):
    if np.ndim(x) != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {np.shape(x)}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_2d(a, "a")
    _check_2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def spmm(s: SparseGraph, d: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Sparse-times-dense product ``s @ d`` (``s.T @ d`` when ``transpose``)."""
    _check_2d(d, "d")
    if s.n != d.shape[0]:
        raise ValueError(f"spmm shape mismatch: sparse ({s.n}, {s.n}) x dense {d.shape}")
    m = s.to_scipy()
    if transpose:
        m = m.T
    if m.dtype != d.dtype:
        m = m.astype(d.dtype)
    return np.asarray(m @ d)


def relu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0.0).astype(x.dtype, copy=False), mask


def row_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def dropout(x: np.ndarray, p: float, rng: np.random.Generator, training: bool = True):
    """Inverted dropout. Returns ``(output, mask)``; the mask already carries the 1/(1-p) scale."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * mask, mask


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))
