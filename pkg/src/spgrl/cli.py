"""Command-line interface.

Subcommands: ``train``, ``evaluate``, ``gradcheck``, ``synth``, ``sweep`` and
``reproduce``. Exit codes: 0 success, 1 runtime or check failure, 2 usage.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import datetime as _dt
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .data import (available_test_nodes, generate_sbm, load_checkpoint, load_dataset, make_splits,
                   save_checkpoint, save_dataset)
from .objectives import VARIANTS
from .optim import relative_errors, numerical_gradient
from .trainer import PARAM_KEYS, TrainConfig, evaluate, forward_backward, init_params, prepare_views, train

log = logging.getLogger("spgrl")

METRICS_SCHEMA = {
    "type": "object",
    "required": ["acc", "macro_f1", "variant", "seed", "epochs", "alpha", "beta", "k", "sigma"],
    "properties": {
        "acc": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "variant": {"enum": list(VARIANTS)},
        "seed": {"type": "integer"},
        "epochs": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "minimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "sigma": {"type": "number", "minimum": 0},
    },
}

GRADCHECK_TOL = 1e-5


class UsageError(Exception):
    pass


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _add_data_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("data")
    g.add_argument("--features")
    g.add_argument("--edges")
    g.add_argument("--labels")
    g.add_argument("--synth", choices=["sbm"])
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--per-class", type=int, default=100, help="SBM nodes per class")
    g.add_argument("--p-in", type=float, default=0.10)
    g.add_argument("--p-out", type=float, default=0.01)
    g.add_argument("--feat-dim", type=int, default=50)
    g.add_argument("--feat-noise", type=float, default=0.6)
    g.add_argument("--data-seed", type=int, default=None, help="seed for SBM draw and split (default: --seed)")


def _add_model_args(p: argparse.ArgumentParser, sweep: bool = False):
    g = p.add_argument_group("model")
    g.add_argument("--k", type=_int_list if sweep else int, default=[7] if sweep else 7)
    g.add_argument("--alpha", type=_float_list if sweep else float, default=[1.0] if sweep else 1.0)
    g.add_argument("--beta", type=_float_list if sweep else float, default=[1.0] if sweep else 1.0)
    g.add_argument("--sigma", type=_float_list if sweep else float, default=[0.0] if sweep else 0.0)
    g.add_argument("--lr", type=float, default=3e-4)
    g.add_argument("--weight-decay", type=float, default=5e-4)
    g.add_argument("--dropout", type=float, default=0.5)
    g.add_argument("--epochs", type=int, default=200)
    g.add_argument("--hidden1", type=int, default=256)
    g.add_argument("--hidden2", type=int, default=128)
    g.add_argument("--variant", choices=VARIANTS, default="full")
    g.add_argument("--lpc", type=int, default=20, help="labeled nodes per class")
    g.add_argument("--n-test", type=int, default=None,
                   help="test nodes (default: 1000, capped at the labeled nodes left after training)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--deterministic", action="store_true")
    g.add_argument("--precision", choices=["f32", "f64"], default="f64")
    g.add_argument("--no-self-loops", action="store_true")
    g.add_argument("--final-relu", action="store_true")
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--pos-weight", default="1.0", help="edge-term weight, or 'auto' for #non-edges/#edges")
    g.add_argument("--recon-sum", action="store_true", help="sum reconstruction terms instead of averaging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spgrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset or synthetic graph")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on its recorded dataset and test split")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p.add_argument("--n", type=int, default=10, help="nodes in the synthetic instance")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--corrupt", choices=PARAM_KEYS + tuple(k.split(".")[1] for k in PARAM_KEYS[:2]) + ("b", "a"),
                   help="debug: scale one analytic gradient block by 1.01")
    p.add_argument("--precision", choices=["f64"], default="f64")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic SBM dataset in the text format")
    _add_data_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data/sbm")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="grid over k, alpha, beta, sigma (comma-separated lists)")
    _add_data_args(p)
    _add_model_args(p, sweep=True)
    p.add_argument("--jobs", type=int, default=0, help="parallel workers (0: min(cells, cores))")
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="re-run a train manifest and compare metrics")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reproduce)
    return parser


# dataset / config resolution ---------------------------------------------------

def _data_source(args) -> dict:
    files = [args.features, args.edges, args.labels]
    if any(files) and not all(files):
        raise UsageError("--features, --edges and --labels must be given together")
    if all(files) and args.synth:
        raise UsageError("choose either data files or --synth, not both")
    if all(files):
        return {"kind": "files", "features": str(args.features), "edges": str(args.edges), "labels": str(args.labels)}
    if args.synth:
        return {"kind": "sbm", "classes": args.classes, "per_class": args.per_class, "p_in": args.p_in,
                "p_out": args.p_out, "feat_dim": args.feat_dim, "feat_noise": args.feat_noise}
    raise UsageError("no dataset: pass --features/--edges/--labels or --synth sbm")


def load_source(src: dict, data_seed: int):
    if src["kind"] == "files":
        return load_dataset(src["features"], src["edges"], src["labels"])
    return generate_sbm(src["per_class"], src["classes"], src["p_in"], src["p_out"], src["feat_dim"],
                        src["feat_noise"], np.random.default_rng(data_seed))


def _pos_weight(text):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--pos-weight must be a number or 'auto', got {text!r}") from None


def _config(args, **override) -> TrainConfig:
    fields = dict(
        k=args.k, alpha=args.alpha, beta=args.beta, learning_rate=args.lr, weight_decay=args.weight_decay,
        dropout=args.dropout, epochs=args.epochs, hidden1=args.hidden1, hidden2=args.hidden2,
        variant=args.variant, seed=args.seed, sigma=args.sigma, per_class=args.lpc,
        n_test=args.n_test if args.n_test is not None else -1,
        self_loops=not args.no_self_loops, final_relu=args.final_relu, temperature=args.temperature,
        pos_weight=_pos_weight(args.pos_weight), normalize_recon=not args.recon_sum,
        precision=args.precision, deterministic=args.deterministic,
    )
    fields.update(override)
    try:
        return TrainConfig(**fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def resolve_n_test(ds, config: TrainConfig) -> int:
    if config.n_test >= 0:
        return config.n_test
    return max(0, min(1000, available_test_nodes(ds.labels, ds.n_classes, config.per_class)))


def run_experiment(data: dict, data_seed: int, config: TrainConfig):
    """Load data, split, train. Returns ``(metrics, result, dataset, splits)``."""
    ds = load_source(data, data_seed)
    n_test = resolve_n_test(ds, config)
    splits = make_splits(ds.labels, ds.n_classes, config.per_class, n_test, data_seed)
    result = train(ds, splits, config)
    metrics = {
        "acc": result.history.test_acc,
        "macro_f1": result.history.test_macro_f1,
        "variant": config.variant,
        "seed": config.seed,
        "epochs": config.epochs,
        "alpha": config.alpha,
        "beta": config.beta,
        "k": config.k,
        "sigma": config.sigma,
        "lpc": config.per_class,
        "n_test": n_test,
        "final_loss": result.history.records[-1].total,
    }
    jsonschema.validate(metrics, METRICS_SCHEMA)
    return metrics, result, ds, splits


def _dump(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_run(out: Path, metrics, result, config: TrainConfig, data: dict, data_seed: int, splits):
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "metrics.json", metrics)
    _dump(out / "history.json", [vars(r) for r in result.history.records])
    save_checkpoint(out / "checkpoint.json", result.params,
                    {"train": config.to_dict(), "data": data, "data_seed": data_seed,
                     "train_nodes": np.flatnonzero(splits.train).tolist(),
                     "test_nodes": np.flatnonzero(splits.test).tolist()},
                    config.seed)
    np.savetxt(out / "embeddings.txt", np.concatenate([result.zt, result.zf], axis=1), fmt="%.17g")


def _manifest(config: TrainConfig, data: dict, data_seed: int, metrics: dict, started: str) -> dict:
    return {
        "tool": "spgrl",
        "version": __version__,
        "config": config.to_dict(),
        "data": data,
        "data_seed": data_seed,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "metrics": metrics,
    }


# commands -----------------------------------------------------------------------

def cmd_train(args) -> int:
    data = _data_source(args)
    config = _config(args)
    data_seed = args.seed if args.data_seed is None else args.data_seed
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    metrics, result, _, splits = run_experiment(data, data_seed, config)
    out = Path(args.out)
    _write_run(out, metrics, result, config, data, data_seed, splits)
    _dump(out / "manifest.json", _manifest(config, data, data_seed, metrics, started))
    print(json.dumps({"acc": metrics["acc"], "macro_f1": metrics["macro_f1"], "out": str(out)}))
    return 0


def cmd_reproduce(args) -> int:
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    config = TrainConfig(**doc["config"])
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    metrics, result, _, splits = run_experiment(doc["data"], doc["data_seed"], config)
    if args.out:
        out = Path(args.out)
        _write_run(out, metrics, result, config, doc["data"], doc["data_seed"], splits)
        _dump(out / "manifest.json", _manifest(config, doc["data"], doc["data_seed"], metrics, started))
    same = metrics == doc["metrics"]
    print(json.dumps({"reproduced": same, "acc": metrics["acc"], "recorded_acc": doc["metrics"]["acc"]}))
    return 0 if same else 1


def cmd_evaluate(args) -> int:
    params, meta, _ = load_checkpoint(args.checkpoint)
    config = TrainConfig(**meta["train"])
    ds = load_source(meta["data"], meta["data_seed"])
    mask = np.zeros(ds.n, dtype=bool)
    mask[meta["test_nodes"]] = True
    _, _, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    views = prepare_views(ds, config, np.random.default_rng(noise_seq))
    acc, f1, _ = evaluate(params, ds, views, mask, config)
    print(json.dumps({"acc": acc, "macro_f1": f1}))
    return 0


def gradcheck_instance(n: int, seed: int, variant: str = "full"):
    """Tiny seeded SBM problem with small widths, for finite-difference checks."""
    rng = np.random.default_rng(seed)
    n_classes = 2
    per = max(1, n // n_classes)
    ds = generate_sbm(per, n_classes, 0.6, 0.15, 5, 0.3, rng)
    config = TrainConfig(k=min(3, ds.n - 1), hidden1=6, hidden2=4, dropout=0.0, variant=variant,
                         seed=seed, per_class=1, alpha=1.0, beta=1.0)
    splits = make_splits(ds.labels, ds.n_classes, 1, 0, seed)
    views = prepare_views(ds, config)
    params = init_params(ds.x.shape[1], ds.n_classes, config, np.random.default_rng(seed))
    return ds, splits, views, params, config


def gradient_report(n: int = 10, seed: int = 0, eps: float = 1e-5, variant: str = "full",
                    corrupt: str | None = None) -> dict[str, float]:
    ds, splits, views, params, config = gradcheck_instance(n, seed, variant)

    def loss_at(p):
        return forward_backward(p, views, ds.labels, splits.train, config, training=False,
                                need_grads=False)[0].total

    _, grads, *_ = forward_backward(params, views, ds.labels, splits.train, config, training=False)
    if corrupt:
        grads[corrupt] = grads[corrupt] * 1.01
    return relative_errors(grads, numerical_gradient(loss_at, params, eps))


def _block_name(name):
    if name in PARAM_KEYS:
        return name
    return {"w0": "topo.w0", "w1": "topo.w1", "b": "cls.b", "a": "cls.a"}[name]


def cmd_gradcheck(args) -> int:
    corrupt = _block_name(args.corrupt) if args.corrupt else None
    report = gradient_report(args.n, args.seed, args.eps, args.variant, corrupt)
    failed = []
    for name, err in report.items():
        ok = err < GRADCHECK_TOL
        print(f"{name:8s} max_rel_err={err:.3e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    args.synth = "sbm"
    src = _data_source(args)
    ds = load_source(src, args.seed if args.data_seed is None else args.data_seed)
    paths = save_dataset(ds, args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def _sweep_cell(payload):
    data, data_seed, cfg = payload
    try:
        metrics, *_ = run_experiment(data, data_seed, TrainConfig(**cfg))
        return metrics, None
    except Exception as exc:  # recorded per cell; the sweep continues
        return None, f"{type(exc).__name__}: {exc}"


def sweep_cells(args):
    data = _data_source(args)
    base = _config(args, k=args.k[0], alpha=args.alpha[0], beta=args.beta[0], sigma=args.sigma[0])
    data_seed = args.seed if args.data_seed is None else args.data_seed
    cells = []
    for i, (k, alpha, beta, sigma) in enumerate(itertools.product(args.k, args.alpha, args.beta, args.sigma)):
        cfg = base.to_dict() | {"k": k, "alpha": alpha, "beta": beta, "sigma": sigma, "seed": base.seed + i}
        cells.append((data, data_seed, cfg))
    return cells


def cmd_sweep(args) -> int:
    cells = sweep_cells(args)
    jobs = args.jobs or min(len(cells), os.cpu_count() or 1)
    if jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, ((_, _, cfg), (metrics, err)) in enumerate(zip(cells, results)):
        row = {"cell": i, "k": cfg["k"], "alpha": cfg["alpha"], "beta": cfg["beta"], "sigma": cfg["sigma"],
               "seed": cfg["seed"], "acc": None, "macro_f1": None, "error": err}
        if metrics is not None:
            row.update(acc=metrics["acc"], macro_f1=metrics["macro_f1"])
            cell_dir = out / f"cell_{i:03d}"
            cell_dir.mkdir(exist_ok=True)
            _dump(cell_dir / "metrics.json", metrics)
        rows.append(row)
    _dump(out / "sweep.json", rows)
    for r in rows:
        acc = "error" if r["acc"] is None else f"{r['acc']:.4f}"
        print(f"k={r['k']} alpha={r['alpha']} beta={r['beta']} sigma={r['sigma']} acc={acc}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spgrl: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"spgrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
