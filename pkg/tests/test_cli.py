import json

import jsonschema
import pytest

from spgrl.cli import METRICS_SCHEMA, gradient_report, main

FAST = ["--synth", "sbm", "--per-class", "30", "--p-in", "0.3", "--p-out", "0.02", "--feat-dim", "10",
        "--feat-noise", "0.1", "--epochs", "15", "--hidden1", "16", "--hidden2", "8", "--deterministic"]


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_train_synth_example(tmp_path):
    out = tmp_path / "run"
    assert run("train", "--synth", "sbm", "--per-class", 50, "--p-in", 0.3, "--p-out", 0.02,
               "--feat-noise", 0.1, "--hidden1", 64, "--hidden2", 32, "--out", out) == 0
    metrics = read(out / "metrics.json")
    jsonschema.validate(metrics, METRICS_SCHEMA)
    assert metrics["acc"] >= 0.85
    for name in ("history.json", "checkpoint.json", "embeddings.txt", "manifest.json"):
        assert (out / name).exists()


def test_train_records_variant(tmp_path):
    assert run("train", *FAST, "--variant", "spgrl1", "--out", tmp_path) == 0
    assert read(tmp_path / "metrics.json")["variant"] == "spgrl1"


def test_missing_file_flag_is_usage_error(tmp_path, capsys):
    (tmp_path / "e.txt").write_text("0 1\n")
    assert run("train", "--edges", tmp_path / "e.txt", "--out", tmp_path / "o") == 2
    assert "--features" in capsys.readouterr().err


def test_no_dataset_is_usage_error(tmp_path):
    assert run("train", "--out", tmp_path) == 2


def test_invalid_config_is_usage_error(tmp_path):
    assert run("train", *FAST, "--dropout", "1.0", "--out", tmp_path) == 2


def test_bad_file_exit_one(tmp_path, capsys):
    for name, text in (("f.txt", "2 1\n1\nx\n"), ("e.txt", "0 1\n"), ("l.txt", "0 0\n")):
        (tmp_path / name).write_text(text)
    code = run("train", "--features", tmp_path / "f.txt", "--edges", tmp_path / "e.txt",
               "--labels", tmp_path / "l.txt", "--out", tmp_path / "o")
    assert code == 1
    assert "f.txt:3" in capsys.readouterr().err


def test_deterministic_metrics_identical(tmp_path):
    for name in ("a", "b"):
        assert run("train", *FAST, "--sigma", 0.5, "--seed", 3, "--out", tmp_path / name) == 0
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()
    assert (tmp_path / "a" / "embeddings.txt").read_bytes() == (tmp_path / "b" / "embeddings.txt").read_bytes()


def test_reproduce_and_evaluate(tmp_path, capsys):
    out = tmp_path / "run"
    assert run("train", *FAST, "--out", out) == 0
    recorded = read(out / "metrics.json")
    capsys.readouterr()
    assert run("reproduce", out / "manifest.json") == 0
    assert json.loads(capsys.readouterr().out)["reproduced"] is True
    assert run("evaluate", "--checkpoint", out / "checkpoint.json") == 0
    evaluated = json.loads(capsys.readouterr().out)
    assert evaluated == {"acc": recorded["acc"], "macro_f1": recorded["macro_f1"]}


def test_reproduce_detects_tampering(tmp_path):
    out = tmp_path / "run"
    assert run("train", *FAST, "--out", out) == 0
    doc = read(out / "manifest.json")
    doc["metrics"]["acc"] = -1.0
    (out / "manifest.json").write_text(json.dumps(doc))
    assert run("reproduce", out / "manifest.json") == 1


def test_synth_then_train_on_files(tmp_path):
    assert run("synth", "--per-class", 30, "--feat-dim", 10, "--out", tmp_path / "d") == 0
    d = tmp_path / "d"
    assert run("train", "--features", d / "features.txt", "--edges", d / "edges.txt", "--labels",
               d / "labels.txt", "--epochs", 5, "--hidden1", 8, "--hidden2", 4, "--out", tmp_path / "o") == 0
    metrics = read(tmp_path / "o" / "metrics.json")
    assert metrics["n_test"] == 90 - 60


def test_gradcheck_passes(capsys):
    assert run("gradcheck") == 0
    out = capsys.readouterr().out
    assert out.count("ok") == 6


def test_gradcheck_corrupt_named(capsys):
    assert run("gradcheck", "--corrupt", "w0") == 1
    captured = capsys.readouterr()
    assert "topo.w0" in captured.err
    assert "FAIL" in captured.out


def test_gradcheck_repeatable():
    assert gradient_report(seed=4) == gradient_report(seed=4)


@pytest.mark.parametrize("variant", ["spgrl1", "spgrl2", "spgrl3"])
def test_gradcheck_variants(variant):
    assert max(gradient_report(variant=variant).values()) < 1e-5


def test_sweep_k(tmp_path):
    assert run("sweep", *FAST, "--k", "2,4,8", "--jobs", 1, "--out", tmp_path) == 0
    rows = read(tmp_path / "sweep.json")
    assert [r["k"] for r in rows] == [2, 4, 8]
    assert all(r["error"] is None for r in rows)
    for i in range(3):
        jsonschema.validate(read(tmp_path / f"cell_{i:03d}" / "metrics.json"), METRICS_SCHEMA)


def test_sweep_zero_weights_equals_spgrl1(tmp_path):
    assert run("sweep", *FAST, "--alpha", "0,1", "--beta", "0,1", "--jobs", 1, "--out", tmp_path / "s") == 0
    rows = read(tmp_path / "s" / "sweep.json")
    assert len(rows) == 4
    zero = next(r for r in rows if r["alpha"] == 0 and r["beta"] == 0)
    assert run("train", *FAST, "--variant", "spgrl1", "--seed", zero["seed"], "--data-seed", 0,
               "--out", tmp_path / "t") == 0
    ref = read(tmp_path / "t" / "metrics.json")
    assert (zero["acc"], zero["macro_f1"]) == (ref["acc"], ref["macro_f1"])


def test_single_point_sweep_equals_train(tmp_path):
    assert run("sweep", *FAST, "--k", 5, "--jobs", 1, "--out", tmp_path / "s") == 0
    assert run("train", *FAST, "--k", 5, "--out", tmp_path / "t") == 0
    assert read(tmp_path / "s" / "cell_000" / "metrics.json") == read(tmp_path / "t" / "metrics.json")


def test_sweep_records_cell_errors(tmp_path):
    assert run("sweep", *FAST, "--k", "3", "--lpc", 40, "--jobs", 1, "--out", tmp_path) == 0
    rows = read(tmp_path / "sweep.json")
    assert rows[0]["acc"] is None and "ValueError" in rows[0]["error"]
