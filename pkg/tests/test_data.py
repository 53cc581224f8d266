import os
from pathlib import Path

import numpy as np
import pytest

from spgrl.data import (UNLABELED, DatasetFormatError, generate_sbm, load_checkpoint, load_dataset,
                        make_splits, perturb_features, save_checkpoint, save_dataset)

CITESEER_DIR = os.environ.get("SPGRL_CITESEER_DIR")


def write_files(tmp_path, features, edges, labels):
    paths = [tmp_path / n for n in ("feat.txt", "edges.txt", "labels.txt")]
    for p, text in zip(paths, (features, edges, labels)):
        p.write_text(text, encoding="utf-8")
    return paths


def test_load_minimal(tmp_path):
    ds = load_dataset(*write_files(tmp_path, "2 3\n1 0 0.5\n0 1 -2\n", "0 1\n", "0 0\n1 1\n"))
    assert ds.n == 2 and ds.n_classes == 2 and ds.x.shape == (2, 3)
    assert ds.a.edge_set() == {(0, 1), (1, 0)}
    assert ds.a.is_symmetric()


def test_load_dedups_both_orientations_and_self_loops(tmp_path):
    ds = load_dataset(*write_files(tmp_path, "3 1\n1\n2\n3\n", "0 1\n1 0\n0 1\n2 2\n", "0 0\n"))
    assert ds.n_edges == 1
    assert not ds.a.has_self_loops()
    assert ds.labels.tolist() == [0, UNLABELED, UNLABELED]


@pytest.mark.parametrize("features,edges,labels,match", [
    ("2 1\n1\nx\n", "", "", r"feat.txt:3"),
    ("2 1\n1\n", "", "", "declares 2 rows"),
    ("2 1\n1\n2\n", "0 5\n", "", r"edges.txt:1: node index 5"),
    ("2 1\n1\n2\n", "0 1 2\n", "", r"edges.txt:1: expected 2 fields"),
    ("2 1\n1\n2\n", "0 1\n", "0 1\n0 0\n", r"labels.txt:2: duplicate label"),
    ("2 1\n1\n2\n", "0 -1\n", "", "negative"),
])
def test_load_errors(tmp_path, features, edges, labels, match):
    with pytest.raises(DatasetFormatError, match=match):
        load_dataset(*write_files(tmp_path, features, edges, labels))


def test_save_load_round_trip(tmp_path):
    ds = generate_sbm(5, 3, 0.6, 0.1, 4, 0.3, np.random.default_rng(3))
    ds2 = load_dataset(*save_dataset(ds, tmp_path / "a").values())
    assert np.array_equal(ds.x, ds2.x)
    assert ds.a.edge_set() == ds2.a.edge_set()
    assert np.array_equal(ds.labels, ds2.labels)
    ds3 = load_dataset(*save_dataset(ds2, tmp_path / "b").values())
    for name in ("features", "edges", "labels"):
        assert (tmp_path / "a" / f"{name}.txt").read_bytes() == (tmp_path / "b" / f"{name}.txt").read_bytes()
    assert np.array_equal(ds3.x, ds.x)


def test_splits_sizes_and_disjoint():
    labels = np.repeat(np.arange(3), 50)
    s = make_splits(labels, 3, 20, 60, seed=0)
    assert s.train.sum() == 60 and s.test.sum() == 60
    assert not np.any(s.train & s.test)
    assert all(np.sum(s.train & (labels == c)) == 20 for c in range(3))


def test_splits_exhaust_class():
    labels = np.array([0] * 5 + [1] * 8)
    s = make_splits(labels, 2, 5, 3, seed=1)
    assert np.all(s.train[labels == 0])


def test_splits_deterministic_and_seed_sensitive():
    labels = np.repeat(np.arange(3), 100)
    a, b = make_splits(labels, 3, 20, 100, 7), make_splits(labels, 3, 20, 100, 7)
    assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
    c = make_splits(labels, 3, 20, 100, 8)
    assert not np.array_equal(a.train, c.train)


def test_splits_skip_unlabeled():
    labels = np.array([0, 0, 1, 1, UNLABELED, UNLABELED, 0, 1])
    s = make_splits(labels, 2, 1, 4, seed=0)
    assert not s.train[4:6].any() and not s.test[4:6].any()


def test_splits_errors():
    labels = np.array([0, 0, 0, 1])
    with pytest.raises(ValueError, match="class 1"):
        make_splits(labels, 2, 2, 0, seed=0)
    with pytest.raises(ValueError, match="remain for testing"):
        make_splits(labels, 2, 1, 3, seed=0)


def test_sbm_degenerate_cliques():
    ds = generate_sbm(3, 2, 1.0, 0.0, 2, 0.0, np.random.default_rng(0))
    expected = {(i, j) for i in range(6) for j in range(6) if i != j and i // 3 == j // 3}
    assert ds.a.edge_set() == expected


def test_sbm_zero_noise_identical_class_rows():
    ds = generate_sbm(4, 3, 0.5, 0.1, 5, 0.0, np.random.default_rng(1))
    for c in range(3):
        rows = ds.x[ds.labels == c]
        assert np.all(rows == rows[0])
    means = np.stack([ds.x[ds.labels == c][0] for c in range(3)])
    np.testing.assert_allclose(means @ means.T, np.eye(3), atol=1e-12)


def test_sbm_intra_edge_count_binomial():
    n_per, p = 20, 0.5
    pairs = 2 * n_per * (n_per - 1) // 2
    mean, sd = pairs * p, np.sqrt(pairs * p * (1 - p))
    for seed in range(50):
        ds = generate_sbm(n_per, 2, p, 0.0, 2, 0.1, np.random.default_rng(seed))
        assert abs(ds.n_edges - mean) <= 3 * sd


def test_sbm_symmetric_zero_diagonal():
    for seed, (pi, po) in enumerate([(0.0, 0.0), (1.0, 1.0), (0.3, 0.05)]):
        ds = generate_sbm(6, 3, pi, po, 3, 0.5, np.random.default_rng(seed))
        assert ds.a.is_symmetric() and not ds.a.has_self_loops()


def test_sbm_requires_enough_dims():
    with pytest.raises(ValueError):
        generate_sbm(2, 3, 0.5, 0.1, 2, 0.1, np.random.default_rng(0))


def test_perturb_zero_sigma_bit_exact():
    x = np.array([[-0.0, 1.5], [2.0, -3.0]])
    out = perturb_features(x, 0.0, np.random.default_rng(0))
    assert out.tobytes() == x.tobytes()


def test_perturb_std_and_everywhere():
    out = perturb_features(np.zeros((100, 1000)), 1.0, np.random.default_rng(2))
    assert abs(out.std() - 1.0) < 0.02
    assert np.all(out != 0)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a.w": rng.standard_normal((3, 2)), "a.b": rng.standard_normal(2).astype(np.float32)}
    save_checkpoint(tmp_path / "ck.json", params, {"k": 3}, 11)
    loaded, cfg, seed = load_checkpoint(tmp_path / "ck.json")
    assert cfg == {"k": 3} and seed == 11
    for k in params:
        assert loaded[k].dtype == params[k].dtype
        assert np.array_equal(loaded[k], params[k])


@pytest.mark.skipif(not CITESEER_DIR, reason="set SPGRL_CITESEER_DIR to a Citeseer export")
def test_citeseer_shape():
    root = Path(CITESEER_DIR)
    ds = load_dataset(root / "features.txt", root / "edges.txt", root / "labels.txt")
    assert (ds.n, ds.x.shape[1], ds.n_classes, ds.n_edges) == (3327, 3703, 6, 4732)
