"""Datasets: flat-file ingestion, train/test splits, synthetic block models, noise."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import SparseGraph

UNLABELED = -1


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    a: SparseGraph
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        n = self.x.shape[0]
        if self.a.n != n or self.labels.shape != (n,):
            raise ValueError(f"inconsistent sizes: x has {n} rows, graph {self.a.n} nodes, "
                             f"labels {self.labels.shape}")
        bad = (self.labels != UNLABELED) & ((self.labels < 0) | (self.labels >= self.n_classes))
        if np.any(bad):
            raise ValueError(f"labels must lie in [0, {self.n_classes}) or be {UNLABELED}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return self.a.nnz // 2


@dataclass(frozen=True, eq=False)
class SplitMasks:
    train: np.ndarray
    test: np.ndarray
    seed: int


def _undirected(n, src, dst) -> SparseGraph:
    src, dst = np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)
    keep = src != dst
    pairs = np.stack([np.concatenate([src[keep], dst[keep]]), np.concatenate([dst[keep], src[keep]])], 1)
    pairs = np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)
    return SparseGraph.from_edges(n, pairs[:, 0], pairs[:, 1], undirected=True)


def _fields(line: str, lineno: int, path, count: int | None = None):
    parts = line.split()
    if count is not None and len(parts) != count:
        raise DatasetFormatError(f"{path}:{lineno}: expected {count} fields, got {len(parts)}")
    return parts


def _int(tok, lineno, path):
    try:
        v = int(tok)
    except ValueError:
        raise DatasetFormatError(f"{path}:{lineno}: not an integer: {tok!r}") from None
    if v < 0:
        raise DatasetFormatError(f"{path}:{lineno}: negative index {v}")
    return v


def load_features(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise DatasetFormatError(f"{path}:1: missing 'N d' header")
    n, d = (_int(t, 1, path) for t in _fields(lines[0], 1, path, 2))
    body = [ln for ln in lines[1:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n:
        raise DatasetFormatError(f"{path}: header declares {n} rows, found {len(body)}")
    x = np.empty((n, d), dtype=np.float64)
    for i, line in enumerate(body):
        parts = _fields(line, i + 2, path, d)
        try:
            x[i] = [float(t) for t in parts]
        except ValueError:
            raise DatasetFormatError(f"{path}:{i + 2}: malformed real value") from None
    if not np.all(np.isfinite(x)):
        raise DatasetFormatError(f"{path}: non-finite feature values")
    return x


def load_edges(path, n: int) -> SparseGraph:
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            s, t = (_int(tok, lineno, path) for tok in _fields(line, lineno, path, 2))
            if s >= n or t >= n:
                raise DatasetFormatError(f"{path}:{lineno}: node index {max(s, t)} beyond {n} feature rows")
            src.append(s)
            dst.append(t)
    return _undirected(n, src, dst)


def load_labels(path, n: int) -> np.ndarray:
    labels = np.full(n, UNLABELED, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            node, cls = (_int(tok, lineno, path) for tok in _fields(line, lineno, path, 2))
            if node >= n:
                raise DatasetFormatError(f"{path}:{lineno}: node index {node} beyond {n} feature rows")
            if labels[node] != UNLABELED:
                raise DatasetFormatError(f"{path}:{lineno}: duplicate label for node {node}")
            labels[node] = cls
    return labels


def load_dataset(features_path, edges_path, labels_path) -> Dataset:
    x = load_features(features_path)
    a = load_edges(edges_path, x.shape[0])
    labels = load_labels(labels_path, x.shape[0])
    n_classes = int(labels.max()) + 1 if np.any(labels != UNLABELED) else 0
    return Dataset(x, a, labels, n_classes)


def save_dataset(ds: Dataset, directory) -> dict[str, Path]:
    """Write the three text files; floats use repr so a reload is bit-exact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {k: directory / f"{k}.txt" for k in ("features", "edges", "labels")}
    with open(paths["features"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{ds.x.shape[0]} {ds.x.shape[1]}\n")
        for row in ds.x:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    rows, cols = ds.a.row_ids(), ds.a.col_indices
    upper = rows < cols
    with open(paths["edges"], "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s} {t}\n" for s, t in zip(rows[upper].tolist(), cols[upper].tolist()))
    with open(paths["labels"], "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{i} {c}\n" for i, c in enumerate(ds.labels.tolist()) if c != UNLABELED)
    return paths


def make_splits(labels: np.ndarray, n_classes: int, per_class: int, n_test: int, seed: int) -> SplitMasks:
    """Sample ``per_class`` training nodes per class, then ``n_test`` test nodes from the rest."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = np.zeros(labels.size, dtype=bool)
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        if members.size < per_class:
            raise ValueError(f"class {c} has {members.size} labeled nodes, {per_class} requested")
        train[rng.choice(members, size=per_class, replace=False)] = True
    rest = np.flatnonzero((labels != UNLABELED) & ~train)
    if rest.size < n_test:
        raise ValueError(f"only {rest.size} labeled nodes remain for testing, {n_test} requested")
    test = np.zeros(labels.size, dtype=bool)
    test[rng.choice(rest, size=n_test, replace=False)] = True
    return SplitMasks(train, test, seed)


def available_test_nodes(labels, n_classes, per_class) -> int:
    labels = np.asarray(labels)
    return int(np.sum(labels != UNLABELED)) - per_class * n_classes


def generate_sbm(n_per_class: int, n_classes: int, p_in: float, p_out: float, d: int,
                 feature_noise: float, rng: np.random.Generator) -> Dataset:
    """Planted-partition graph with class-mean features plus isotropic Gaussian noise.

    Class means are the first ``n_classes`` rows of a random orthonormal
    basis of R^d, so ``d >= n_classes`` is required.
    """
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be a probability, got {p}")
    if min(n_per_class, n_classes, d) < 1:
        raise ValueError("n_per_class, n_classes and d must be >= 1")
    if d < n_classes:
        raise ValueError(f"need d >= n_classes for orthogonal class means (d={d}, M={n_classes})")
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes), n_per_class)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draws = rng.random((n, n)) < prob
    src, dst = np.nonzero(np.triu(draws, 1))
    a = _undirected(n, src, dst)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    means = q.T[:n_classes]
    x = means[labels] + feature_noise * rng.standard_normal((n, d))
    return Dataset(x, a, labels, n_classes)


def perturb_features(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """X + N(0, sigma^2) noise per entry."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return x.copy()
    return x + sigma * rng.standard_normal(x.shape)


def save_checkpoint(path, params: dict[str, np.ndarray], config: dict, seed: int):
    doc = {
        "format": "spgrl-checkpoint/1",
        "seed": seed,
        "config": config,
        "params": {k: {"shape": list(v.shape), "dtype": str(v.dtype),
                       "values": [float(t) for t in v.reshape(-1)]}
                   for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path):
    """Returns ``(params, config, seed)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = {k: np.array(v["values"], dtype=v["dtype"]).reshape(v["shape"]) for k, v in doc["params"].items()}
    return params, doc["config"], doc["seed"]
